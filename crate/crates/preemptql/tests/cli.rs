use std::fs;
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};
use std::process::{Child, Command, Output, Stdio};

use clap::CommandFactory;
use preemptql::cli::{client_config, server_config, Cli, QueryArgs, QueryFile, ServeArgs, ServeFile};
use preemptql_core::client::OptionalStrategy;
use preemptql_core::{parse, Triple};
use preemptql_oracle::{canonical, evaluate};

const BIN: &str = env!("CARGO_BIN_EXE_preemptql");

fn run(args: &[&str]) -> Output {
    Command::new(BIN).args(args).env_remove("PREEMPTQL_LOG").output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8(o.stderr.clone()).unwrap()
}

fn snapshot_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/snapshots")
}

const HELP: [(&str, &[&str]); 8] = [
    ("root", &[]),
    ("store_info", &["store", "info"]),
    ("serve", &["serve"]),
    ("query", &["query"]),
    ("client_query", &["client", "query"]),
    ("bench_generate", &["bench", "generate"]),
    ("bench_run", &["bench", "run"]),
    ("bench", &["bench"]),
];

/// Set `UPDATE_SNAPSHOTS=1` to rewrite the files after changing a flag.
#[test]
fn help_output_matches_snapshots() {
    let update = std::env::var_os("UPDATE_SNAPSHOTS").is_some();
    for (name, path) in HELP {
        let mut args = path.to_vec();
        args.push("--help");
        let out = run(&args);
        assert!(out.status.success(), "{name}");
        let file = snapshot_dir().join(format!("{name}.txt"));
        if update {
            fs::create_dir_all(snapshot_dir()).unwrap();
            fs::write(&file, stdout(&out)).unwrap();
        }
        let expected = fs::read_to_string(&file).unwrap_or_else(|e| panic!("{}: {e}", file.display()));
        assert_eq!(stdout(&out), expected, "{name} help changed");
    }
}

#[test]
fn help_lists_every_flag_with_its_default() {
    let root = Cli::command();
    let mut stack: Vec<(Vec<String>, clap::Command)> = vec![(Vec::new(), root)];
    let mut checked = 0;
    while let Some((path, cmd)) = stack.pop() {
        for sub in cmd.get_subcommands() {
            let mut p = path.clone();
            p.push(sub.get_name().to_string());
            stack.push((p, sub.clone()));
        }
        if cmd.has_subcommands() {
            continue;
        }
        let mut args: Vec<&str> = path.iter().map(String::as_str).collect();
        args.push("--help");
        let help = stdout(&run(&args));
        for arg in cmd.get_arguments().chain(Cli::command().get_arguments()) {
            let Some(long) = arg.get_long() else { continue };
            if matches!(long, "help" | "version") {
                continue;
            }
            let line = help.lines().find(|l| l.contains(&format!("--{long}"))).unwrap_or_else(|| panic!("{path:?} lacks --{long}"));
            let optional_without_default = ["config", "stats-json", "report", "spec", "out", "data", "endpoint", "file"];
            if !optional_without_default.contains(&long) {
                let text = help[help.find(line).unwrap()..].split("\n  -").next().unwrap().to_string();
                assert!(text.contains("[default"), "{path:?} --{long} has no default in {text:?}");
            }
            checked += 1;
        }
    }
    assert!(checked > 20);
}

#[test]
fn unknown_subcommand_prints_usage_and_exits_1() {
    let out = run(&["frobnicate"]);
    assert_eq!(out.status.code(), Some(1));
    let err = stderr(&out);
    assert!(err.lines().any(|l| l.starts_with("ERROR: ")), "{err}");
    assert!(err.lines().any(|l| l.starts_with("USAGE: ")), "{err}");
    assert!(err.contains("bench"));
    assert_eq!(run(&[]).status.code(), Some(1));
    assert_eq!(run(&["serve", "--port", "many"]).status.code(), Some(1));
}

fn write_canonical(dir: &Path) -> (PathBuf, Vec<Triple>) {
    let data: Vec<Triple> = canonical::store().triples().collect();
    let path = dir.join("data.nt");
    fs::write(&path, data.iter().map(|t| format!("{t}\n")).collect::<String>()).unwrap();
    (path, data)
}

#[test]
fn store_info_counts_and_checksums() {
    let dir = tempfile::tempdir().unwrap();
    let (path, data) = write_canonical(dir.path());
    let out = run(&["store", "info", "--data", path.to_str().unwrap()]);
    assert!(out.status.success(), "{}", stderr(&out));
    let text = stdout(&out);
    let st = canonical::store();
    assert!(text.starts_with(&format!("triples\t{}\n", data.len())));
    assert!(text.contains(&format!("spo\t{:016x}", st.checksums()[0])));
    assert!(text.contains(&format!("fingerprint\t{:016x}", st.fingerprint())));

    let json = run(&["--format", "json", "store", "info", "--data", path.to_str().unwrap()]);
    let v: serde_json::Value = serde_json::from_slice(&json.stdout).unwrap();
    assert_eq!(v["triples"], data.len());
    assert_eq!(v["checksums"].as_object().unwrap().len(), 3);
}

#[test]
fn bad_data_is_a_user_error_naming_the_line() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.nt");
    fs::write(&path, "<a> <b> <c> .\n<a> <b> .\n").unwrap();
    for args in [vec!["store", "info", "--data"], vec!["serve", "--port", "0", "--data"]] {
        let mut args = args.clone();
        args.push(path.to_str().unwrap());
        let out = run(&args);
        assert_eq!(out.status.code(), Some(1));
        assert!(stderr(&out).starts_with("ERROR: ") && stderr(&out).contains("line 2"), "{}", stderr(&out));
    }
    let out = run(&["store", "info", "--data", "/nonexistent.nt"]);
    assert_eq!(out.status.code(), Some(1));
    let out = run(&["store", "info"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("--data"));
}

struct Served {
    child: Child,
    endpoint: String,
}

impl Drop for Served {
    fn drop(&mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

fn serve(data: &Path, extra: &[&str]) -> Served {
    let mut child = Command::new(BIN)
        .args(["serve", "--port", "0", "--data", data.to_str().unwrap()])
        .args(extra)
        .stdout(Stdio::piped())
        .spawn()
        .unwrap();
    let mut line = String::new();
    BufReader::new(child.stdout.take().unwrap()).read_line(&mut line).unwrap();
    let endpoint = line.trim().strip_prefix("listening on ").unwrap().to_string();
    Served { child, endpoint }
}

#[test]
fn query_against_served_fixture_matches_oracle() {
    let dir = tempfile::tempdir().unwrap();
    let (data_path, data) = write_canonical(dir.path());
    let served = serve(&data_path, &["--quantum-ms", "1", "--page-limit", "2", "--workers", "1"]);
    let q = "PREFIX ex: <http://example.org/>
SELECT ?s ?n ?a WHERE { ?s ex:name ?n OPTIONAL { ?s ex:age ?a } } ORDER BY DESC(?n)";
    let qfile = dir.path().join("q.rq");
    fs::write(&qfile, q).unwrap();
    let stats = dir.path().join("stats.json");
    for strategy in ["bind", "opt", "auto"] {
        let out = run(&[
            "query",
            "--endpoint",
            &served.endpoint,
            "--file",
            qfile.to_str().unwrap(),
            "--optional-strategy",
            strategy,
            "--block-size",
            "2",
            "--stats-json",
            stats.to_str().unwrap(),
        ]);
        assert!(out.status.success(), "{}", stderr(&out));
        let expected = evaluate(&parse(q).unwrap(), &data);
        let rows: Vec<String> = expected
            .iter()
            .map(|m| ["s", "n", "a"].iter().map(|v| m.get_named(v).map(|t| t.to_string()).unwrap_or_default()).collect::<Vec<_>>().join("\t"))
            .collect();
        let text = stdout(&out);
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("?s\t?n\t?a"));
        let got: Vec<&str> = lines.collect();
        // names are unique, so the order is fully determined
        assert_eq!(got, rows, "{strategy}");
        let s: serde_json::Value = serde_json::from_str(&fs::read_to_string(&stats).unwrap()).unwrap();
        for key in ["http_requests", "bytes_received", "bytes_sent", "first_result_ms", "total_ms"] {
            assert!(s.get(key).is_some(), "{key}");
        }
        assert!(s["http_requests"].as_u64().unwrap() > 1);
    }

    let json = run(&["--format", "json", "client", "query", "--endpoint", &served.endpoint, "--file", qfile.to_str().unwrap()]);
    let v: serde_json::Value = serde_json::from_slice(&json.stdout).unwrap();
    assert_eq!(v["head"]["vars"], serde_json::json!(["s", "n", "a"]));
    assert_eq!(v["results"]["bindings"].as_array().unwrap().len(), 7);
    assert!(v["results"]["bindings"].as_array().unwrap().iter().any(|b| b["n"]["lang"] == "en"));
}

#[test]
fn query_errors_have_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let qfile = dir.path().join("q.rq");
    fs::write(&qfile, "SELECT * WHERE { ?s ?p ?o }").unwrap();
    let refused = run(&["query", "--endpoint", "http://127.0.0.1:9", "--file", qfile.to_str().unwrap(), "--max-retries", "0"]);
    assert_eq!(refused.status.code(), Some(1));
    assert!(stderr(&refused).starts_with("ERROR: "));
    fs::write(&qfile, "SELECT WHERE {").unwrap();
    let bad = run(&["query", "--endpoint", "http://127.0.0.1:9", "--file", qfile.to_str().unwrap()]);
    assert_eq!(bad.status.code(), Some(1));
}

#[test]
fn config_file_sits_under_flags() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.toml");
    fs::write(
        &cfg,
        "format = \"json\"\n[serve]\nworkers = 2\nquantum_ms = \"inf\"\nport = 0\n[query]\nendpoint = \"http://h:1\"\nblock_size = 7\noptional_strategy = \"opt\"\n",
    )
    .unwrap();
    let file = preemptql::cli::read_config(&cfg).unwrap();
    let serve_flags = ServeArgs { data: None, host: None, port: None, quantum_ms: None, workers: Some(3), queue_size: None, page_limit: None };
    let sc = server_config(&serve_flags, &file.serve).unwrap();
    assert_eq!((sc.workers, sc.quantum, sc.port, sc.queue_capacity, sc.page_limit), (3, None, 0, 100, 2000));
    let sc = server_config(&ServeArgs { workers: None, ..serve_flags }, &ServeFile::default()).unwrap();
    assert_eq!((sc.workers, sc.quantum.unwrap().as_millis()), (4, 75));

    let query_flags = QueryArgs {
        endpoint: None,
        file: None,
        optional_strategy: Some("bind".into()),
        block_size: None,
        max_retries: None,
        timeout_ms: None,
        stats_json: None,
    };
    let cc = client_config(&query_flags, &file.query).unwrap();
    assert_eq!((cc.endpoint.as_str(), cc.bind_block_size, cc.optional_strategy), ("http://h:1", 7, OptionalStrategy::Bind));
    assert!(client_config(&query_flags, &QueryFile::default()).is_err());

    let (data, _) = write_canonical(dir.path());
    let out = run(&["--config", cfg.to_str().unwrap(), "store", "info", "--data", data.to_str().unwrap()]);
    assert!(serde_json::from_slice::<serde_json::Value>(&out.stdout).is_ok());
    let out = run(&["--config", cfg.to_str().unwrap(), "--format", "tsv", "store", "info", "--data", data.to_str().unwrap()]);
    assert!(stdout(&out).starts_with("triples\t"));

    fs::write(&cfg, "[serve]\nwrokers = 2\n").unwrap();
    let out = run(&["--config", cfg.to_str().unwrap(), "store", "info", "--data", data.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn taken_port_fails_at_startup() {
    let dir = tempfile::tempdir().unwrap();
    let (data, _) = write_canonical(dir.path());
    let taken = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
    let port = taken.local_addr().unwrap().port().to_string();
    let out = run(&["serve", "--data", data.to_str().unwrap(), "--port", &port]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("cannot bind"), "{}", stderr(&out));
    let out = run(&["serve", "--data", data.to_str().unwrap(), "--quantum-ms", "0"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn unstartable_benchmark_server_is_an_internal_error() {
    let dir = tempfile::tempdir().unwrap();
    let spec = dir.path().join("spec.json");
    fs::write(&spec, r#"{"triples": 800, "queries": 2, "max_joins": 3}"#).unwrap();
    let out = run(&[
        "bench",
        "run",
        "--spec",
        spec.to_str().unwrap(),
        "--report",
        dir.path().join("r.json").to_str().unwrap(),
        "--server-bin",
        "/nonexistent/server",
    ]);
    assert_eq!(out.status.code(), Some(2), "{}", stderr(&out));
    assert!(stderr(&out).starts_with("ERROR: "));
}
