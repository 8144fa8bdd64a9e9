//! Command line: argument parsing, configuration layering and dispatch.

use std::fs;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::mpsc;
use std::sync::Arc;

use clap::error::ErrorKind;
use clap::{Args, CommandFactory, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use preemptql_core::client::{Client, ClientConfig, ClientError, ClientStats, OptionalStrategy, TransportError};
use preemptql_core::store::IndexId;
use preemptql_core::{parse, PlanNode, SolutionMapping, Variable};

use crate::bench::{self, WorkloadSpec};
use crate::http::{self, HttpTransport};
use crate::load::load_file;
use crate::server::{self, ServerConfig};
use crate::wire::mapping_to_json;

pub const LOG_ENV: &str = "PREEMPTQL_LOG";

#[derive(Debug)]
pub enum CliError {
    /// Bad input from the user: exit code 1.
    User(String),
    /// A bug or an environment failure: exit code 2.
    Internal(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::User(_) => 1,
            CliError::Internal(_) => 2,
        }
    }

    pub fn message(&self) -> &str {
        match self {
            CliError::User(m) | CliError::Internal(m) => m,
        }
    }
}

fn user(m: impl Into<String>) -> CliError {
    CliError::User(m.into())
}

fn internal(m: impl Into<String>) -> CliError {
    CliError::Internal(m.into())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Tsv,
    Json,
}

#[derive(Debug, Parser)]
#[command(name = "preemptql", version, about = "Preemptive SPARQL server, smart client and benchmark harness")]
pub struct Cli {
    /// TOML file with defaults for any flag; flags given here win
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Output format [default: tsv]
    #[arg(long, global = true, value_enum)]
    pub format: Option<Format>,
    /// Log filter, e.g. info or debug; overrides PREEMPTQL_LOG [default: warn]
    #[arg(long, global = true, value_name = "LEVEL")]
    pub log_level: Option<String>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Inspect a dataset
    #[command(subcommand)]
    Store(StoreCommand),
    /// Serve a dataset over HTTP with preemptive scheduling
    Serve(ServeArgs),
    /// Run a query through the smart client
    Query(QueryArgs),
    /// Smart client commands
    #[command(subcommand)]
    Client(ClientCommand),
    /// Generate workloads and run benchmarks
    #[command(subcommand)]
    Bench(BenchCommand),
}

#[derive(Debug, Subcommand)]
pub enum StoreCommand {
    /// Print the triple count and per-index checksums
    Info(StoreInfoArgs),
}

#[derive(Debug, Args)]
pub struct StoreInfoArgs {
    /// N-Triples file
    #[arg(long, value_name = "PATH")]
    pub data: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum ClientCommand {
    /// Run a query through the smart client
    Query(QueryArgs),
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    /// N-Triples file to serve
    #[arg(long, value_name = "PATH")]
    pub data: Option<PathBuf>,
    /// Address to listen on [default: 127.0.0.1]
    #[arg(long)]
    pub host: Option<String>,
    /// Port to listen on; 0 picks a free one [default: 8080]
    #[arg(long)]
    pub port: Option<u16>,
    /// Time quantum in milliseconds, or "inf" for FCFS [default: 75]
    #[arg(long, value_name = "MS")]
    pub quantum_ms: Option<String>,
    /// Worker threads [default: 4]
    #[arg(long, value_name = "N")]
    pub workers: Option<usize>,
    /// Jobs that may wait beyond the idle workers [default: 100]
    #[arg(long, value_name = "N")]
    pub queue_size: Option<usize>,
    /// Maximum bindings per response [default: 2000]
    #[arg(long, value_name = "N")]
    pub page_limit: Option<usize>,
}

#[derive(Debug, Args)]
pub struct QueryArgs {
    /// Server address, e.g. http://localhost:8080
    #[arg(long, value_name = "URL")]
    pub endpoint: Option<String>,
    /// File holding the SPARQL query
    #[arg(long, value_name = "PATH")]
    pub file: Option<PathBuf>,
    /// OPTIONAL evaluation strategy [default: auto]
    #[arg(long, value_name = "STRATEGY", value_parser = ["bind", "opt", "auto"])]
    pub optional_strategy: Option<String>,
    /// Mappings per bind-join block [default: 20]
    #[arg(long, value_name = "N")]
    pub block_size: Option<usize>,
    /// Retries on overload or network failure [default: 5]
    #[arg(long, value_name = "N")]
    pub max_retries: Option<u32>,
    /// Per-request timeout in milliseconds [default: 60000]
    #[arg(long, value_name = "MS")]
    pub timeout_ms: Option<u64>,
    /// Write client statistics as JSON to this file
    #[arg(long, value_name = "PATH")]
    pub stats_json: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum BenchCommand {
    /// Write a synthetic dataset and queries with their cardinalities
    Generate(GenerateArgs),
    /// Run a workload against spawned servers, one per quantum
    Run(RunArgs),
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    /// Workload spec (JSON)
    #[arg(long, value_name = "PATH")]
    pub spec: Option<PathBuf>,
    /// Output directory
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// Workload spec (JSON)
    #[arg(long, value_name = "PATH")]
    pub spec: Option<PathBuf>,
    /// Comma-separated quanta in milliseconds, "inf" for FCFS [default: the spec's, 75,1000,inf]
    #[arg(long, value_name = "LIST")]
    pub quanta: Option<String>,
    /// Report JSON output path
    #[arg(long, value_name = "PATH")]
    pub report: Option<PathBuf>,
    /// Directory for the generated workload [default: a temporary directory]
    #[arg(long, value_name = "DIR")]
    pub work_dir: Option<PathBuf>,
    /// Server executable [default: this program]
    #[arg(long, value_name = "PATH")]
    pub server_bin: Option<PathBuf>,
}

/// Values read from `--config`. Every field is optional and sits under the
/// corresponding flag.
#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FileConfig {
    pub format: Option<Format>,
    pub log_level: Option<String>,
    pub data: Option<PathBuf>,
    pub serve: ServeFile,
    pub query: QueryFile,
    pub bench: BenchFile,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServeFile {
    pub host: Option<String>,
    pub port: Option<u16>,
    pub quantum_ms: Option<toml::Value>,
    pub workers: Option<usize>,
    pub queue_size: Option<usize>,
    pub page_limit: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct QueryFile {
    pub endpoint: Option<String>,
    pub optional_strategy: Option<String>,
    pub block_size: Option<usize>,
    pub max_retries: Option<u32>,
    pub timeout_ms: Option<u64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchFile {
    pub quanta: Option<String>,
    pub server_bin: Option<PathBuf>,
}

pub fn read_config(path: &Path) -> Result<FileConfig, CliError> {
    let text = fs::read_to_string(path).map_err(|e| user(format!("cannot read config {}: {e}", path.display())))?;
    toml::from_str(&text).map_err(|e| user(format!("bad config {}: {e}", path.display())))
}

fn require<T>(value: Option<T>, flag: &str) -> Result<T, CliError> {
    value.ok_or_else(|| user(format!("missing required flag --{flag}")))
}

/// Parses argv, sets up logging and runs the command. Returns the exit code.
pub fn main_with(args: Vec<String>, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32 {
    let cli = match Cli::try_parse_from(&args) {
        Ok(cli) => cli,
        Err(e) => return report_clap_error(e, stdout, stderr),
    };
    let file = match &cli.config {
        Some(p) => match read_config(p) {
            Ok(f) => f,
            Err(e) => return fail(e, stderr),
        },
        None => FileConfig::default(),
    };
    init_logging(cli.log_level.as_deref(), file.log_level.as_deref());
    let format = cli.format.or(file.format).unwrap_or(Format::Tsv);
    match dispatch(cli.command, &file, format, stdout) {
        Ok(()) => 0,
        Err(e) => fail(e, stderr),
    }
}

fn fail(e: CliError, stderr: &mut dyn Write) -> i32 {
    let _ = writeln!(stderr, "ERROR: {}", e.message());
    e.exit_code()
}

fn report_clap_error(e: clap::Error, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32 {
    let rendered = e.render().to_string();
    if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
        let _ = write!(stdout, "{rendered}");
        return 0;
    }
    for line in rendered.lines() {
        if let Some(rest) = line.strip_prefix("error: ") {
            let _ = writeln!(stderr, "ERROR: {rest}");
        } else if let Some(rest) = line.strip_prefix("Usage: ") {
            let _ = writeln!(stderr, "USAGE: {rest}");
        } else if !line.is_empty() {
            let _ = writeln!(stderr, "{line}");
        }
    }
    if matches!(e.kind(), ErrorKind::InvalidSubcommand | ErrorKind::DisplayHelpOnMissingArgumentOrSubcommand | ErrorKind::MissingSubcommand) {
        let _ = write!(stderr, "\n{}", Cli::command().render_help());
    }
    1
}

fn init_logging(flag: Option<&str>, file: Option<&str>) {
    let filter = flag.map(str::to_string).or_else(|| std::env::var(LOG_ENV).ok()).or(file.map(str::to_string)).unwrap_or_else(|| "warn".into());
    let _ = env_logger::Builder::new().parse_filters(&filter).format_timestamp_millis().try_init();
}

fn dispatch(command: Command, file: &FileConfig, format: Format, out: &mut dyn Write) -> Result<(), CliError> {
    match command {
        Command::Store(StoreCommand::Info(a)) => store_info(a, file, format, out),
        Command::Serve(a) => serve(a, file, out),
        Command::Query(a) | Command::Client(ClientCommand::Query(a)) => query(a, file, format, out),
        Command::Bench(BenchCommand::Generate(a)) => bench_generate(a, format, out),
        Command::Bench(BenchCommand::Run(a)) => bench_run(a, file, format, out),
    }
}

fn io_err(e: io::Error) -> CliError {
    internal(format!("output failed: {e}"))
}

fn load(path: &Path) -> Result<preemptql_core::TripleStore, CliError> {
    load_file(path).map_err(|e| user(format!("cannot load {}: {e}", path.display())))
}

fn store_info(a: StoreInfoArgs, file: &FileConfig, format: Format, out: &mut dyn Write) -> Result<(), CliError> {
    let data = require(a.data.or(file.data.clone()), "data")?;
    let store = load(&data)?;
    let sums = store.checksums();
    match format {
        Format::Tsv => {
            writeln!(out, "triples\t{}", store.len()).map_err(io_err)?;
            for (ix, sum) in IndexId::ALL.iter().zip(sums) {
                writeln!(out, "{ix}\t{sum:016x}").map_err(io_err)?;
            }
            writeln!(out, "fingerprint\t{:016x}", store.fingerprint()).map_err(io_err)?;
        }
        Format::Json => {
            let checksums: serde_json::Map<String, serde_json::Value> =
                IndexId::ALL.iter().zip(sums).map(|(ix, s)| (ix.to_string(), format!("{s:016x}").into())).collect();
            let v = serde_json::json!({
                "triples": store.len(),
                "checksums": checksums,
                "fingerprint": format!("{:016x}", store.fingerprint()),
            });
            writeln!(out, "{v}").map_err(io_err)?;
        }
    }
    Ok(())
}

/// Server settings from flags over the config file over defaults.
pub fn server_config(a: &ServeArgs, file: &ServeFile) -> Result<ServerConfig, CliError> {
    let d = ServerConfig::default();
    let quantum = match (&a.quantum_ms, &file.quantum_ms) {
        (Some(q), _) => Some(q.clone()),
        (None, Some(toml::Value::Integer(n))) => Some(n.to_string()),
        (None, Some(toml::Value::String(s))) => Some(s.clone()),
        (None, Some(other)) => return Err(user(format!("bad quantum_ms in config: {other}"))),
        (None, None) => None,
    };
    let config = ServerConfig {
        quantum: match quantum {
            Some(q) => bench::parse_quantum(&q).map_err(user)?,
            None => d.quantum,
        },
        workers: a.workers.or(file.workers).unwrap_or(d.workers),
        queue_capacity: a.queue_size.or(file.queue_size).unwrap_or(d.queue_capacity),
        page_limit: a.page_limit.or(file.page_limit).unwrap_or(d.page_limit),
        host: a.host.clone().or(file.host.clone()).unwrap_or(d.host),
        port: a.port.or(file.port).unwrap_or(d.port),
    };
    config.validate().map_err(user)?;
    Ok(config)
}

fn serve(a: ServeArgs, file: &FileConfig, out: &mut dyn Write) -> Result<(), CliError> {
    let config = server_config(&a, &file.serve)?;
    let data = require(a.data.or(file.data.clone()), "data")?;
    let store = load(&data)?;
    log::info!("loaded {} triples from {}", store.len(), data.display());
    let handle = server::start(Arc::new(store), config).map_err(|e| user(e.to_string()))?;
    writeln!(out, "listening on http://{}", handle.addr()).map_err(io_err)?;
    out.flush().map_err(io_err)?;
    let (tx, rx) = mpsc::channel();
    ctrlc::set_handler(move || {
        let _ = tx.send(());
    })
    .map_err(|e| internal(format!("cannot install signal handler: {e}")))?;
    let _ = rx.recv();
    log::info!("shutting down");
    handle.shutdown();
    Ok(())
}

/// Client settings from flags over the config file over defaults.
pub fn client_config(a: &QueryArgs, file: &QueryFile) -> Result<ClientConfig, CliError> {
    let d = ClientConfig::default();
    let strategy = a.optional_strategy.clone().or(file.optional_strategy.clone());
    let config = ClientConfig {
        endpoint: require(a.endpoint.clone().or(file.endpoint.clone()), "endpoint")?,
        bind_block_size: a.block_size.or(file.block_size).unwrap_or(d.bind_block_size),
        optional_strategy: match strategy {
            Some(s) => OptionalStrategy::parse(&s).ok_or_else(|| user(format!("unknown optional strategy {s:?}")))?,
            None => d.optional_strategy,
        },
        max_retries: a.max_retries.or(file.max_retries).unwrap_or(d.max_retries),
        timeout_ms: a.timeout_ms.or(file.timeout_ms).unwrap_or(d.timeout_ms),
    };
    if config.bind_block_size == 0 {
        return Err(user("block size must be at least 1"));
    }
    Ok(config)
}

/// Output columns: the projection if there is one, else every variable.
pub fn result_vars(node: &PlanNode) -> Vec<Variable> {
    match node {
        PlanNode::Project(vars, _) => vars.clone(),
        PlanNode::Distinct(p) => result_vars(p),
        other => other.variables().into_iter().collect(),
    }
}

#[derive(Debug, Serialize)]
struct StatsJson {
    http_requests: u64,
    bytes_received: u64,
    bytes_sent: u64,
    first_result_ms: Option<f64>,
    total_ms: f64,
    plan_bytes_received: u64,
    suspended_pages: u64,
}

impl From<ClientStats> for StatsJson {
    fn from(s: ClientStats) -> Self {
        StatsJson {
            http_requests: s.http_requests,
            bytes_received: s.bytes_received,
            bytes_sent: s.bytes_sent,
            first_result_ms: s.first_result_ms,
            total_ms: s.total_ms,
            plan_bytes_received: s.plan_bytes_received,
            suspended_pages: s.suspended_pages,
        }
    }
}

fn tsv_row(vars: &[Variable], m: &SolutionMapping) -> String {
    vars.iter().map(|v| m.get(v).map(|t| t.to_string()).unwrap_or_default()).collect::<Vec<_>>().join("\t")
}

fn client_error(e: ClientError) -> CliError {
    match e {
        ClientError::Fragment(m) => internal(format!("server rejected a client subquery: {m}")),
        ClientError::Transport(TransportError::Network(m)) => user(format!("cannot reach endpoint: {m}")),
        other => user(other.to_string()),
    }
}

fn query(a: QueryArgs, file: &FileConfig, format: Format, out: &mut dyn Write) -> Result<(), CliError> {
    let config = client_config(&a, &file.query)?;
    let path = require(a.file.clone(), "file")?;
    let text = fs::read_to_string(&path).map_err(|e| user(format!("cannot read {}: {e}", path.display())))?;
    let node = parse(&text).map_err(|e| user(format!("{}: {e}", path.display())))?;
    let vars = result_vars(&node);
    let mut client = Client::new(HttpTransport::new(&config), config);
    let mut out = BufWriter::new(out);
    let mut rows = Vec::new();
    let mut write_err = None;
    if format == Format::Tsv {
        let header = vars.iter().map(|v| format!("?{}", v.name())).collect::<Vec<_>>().join("\t");
        writeln!(out, "{header}").map_err(io_err)?;
    }
    let result = http::execute(&mut client, &text, &mut |m| match format {
        Format::Tsv => {
            if let Err(e) = writeln!(out, "{}", tsv_row(&vars, &m)) {
                write_err.get_or_insert(e);
            }
        }
        Format::Json => rows.push(mapping_to_json(&m)),
    });
    if let Some(e) = write_err {
        return Err(io_err(e));
    }
    let stats = result.map_err(client_error)?;
    if format == Format::Json {
        let v = serde_json::json!({
            "head": { "vars": vars.iter().map(|v| v.name()).collect::<Vec<_>>() },
            "results": { "bindings": rows },
        });
        writeln!(out, "{v}").map_err(io_err)?;
    }
    out.flush().map_err(io_err)?;
    if let Some(p) = &a.stats_json {
        let json = serde_json::to_string_pretty(&StatsJson::from(stats)).expect("stats serialize");
        fs::write(p, json + "\n").map_err(|e| user(format!("cannot write {}: {e}", p.display())))?;
    }
    Ok(())
}

fn read_spec(path: Option<PathBuf>) -> Result<WorkloadSpec, CliError> {
    let path = require(path, "spec")?;
    let text = fs::read_to_string(&path).map_err(|e| user(format!("cannot read {}: {e}", path.display())))?;
    let spec: WorkloadSpec = serde_json::from_str(&text).map_err(|e| user(format!("bad spec {}: {e}", path.display())))?;
    spec.validate().map_err(|e| user(e.to_string()))?;
    Ok(spec)
}

fn bench_generate(a: GenerateArgs, format: Format, out: &mut dyn Write) -> Result<(), CliError> {
    let spec = read_spec(a.spec)?;
    let dir = require(a.out, "out")?;
    let workload = bench::generate(&spec).map_err(|e| user(e.to_string()))?;
    bench::write_workload(&workload, &dir).map_err(|e| user(format!("cannot write {}: {e}", dir.display())))?;
    match format {
        Format::Tsv => {
            writeln!(out, "query\tshape\tjoins\tcardinality").map_err(io_err)?;
            for q in &workload.queries {
                writeln!(out, "{}\t{}\t{}\t{}", q.name, q.shape, q.joins, q.cardinality).map_err(io_err)?;
            }
        }
        Format::Json => {
            writeln!(out, "{}", serde_json::to_string(&workload.queries).expect("queries serialize")).map_err(io_err)?;
        }
    }
    Ok(())
}

fn bench_run(a: RunArgs, file: &FileConfig, format: Format, out: &mut dyn Write) -> Result<(), CliError> {
    let mut spec = read_spec(a.spec)?;
    let report_path = require(a.report, "report")?;
    if let Some(q) = a.quanta.or(file.bench.quanta.clone()) {
        spec.quanta = q.split(',').map(|s| s.trim().to_string()).collect();
        spec.validate().map_err(|e| user(e.to_string()))?;
    }
    let server_bin = match a.server_bin.or(file.bench.server_bin.clone()) {
        Some(p) => p,
        None => std::env::current_exe().map_err(|e| internal(format!("cannot locate own executable: {e}")))?,
    };
    let temp;
    let dir = match a.work_dir {
        Some(d) => d,
        None => {
            temp = tempfile::tempdir().map_err(|e| internal(format!("cannot create work dir: {e}")))?;
            temp.path().to_path_buf()
        }
    };
    let workload = bench::generate(&spec).map_err(|e| user(e.to_string()))?;
    bench::write_workload(&workload, &dir).map_err(|e| user(format!("cannot write {}: {e}", dir.display())))?;
    let quanta = spec.quanta.clone();
    let report = bench::run(&spec, &workload, &dir.join("dataset.nt"), &quanta, &server_bin).map_err(|e| {
        if e.starts_with("quanta") {
            user(e)
        } else {
            internal(e)
        }
    })?;
    let json = serde_json::to_string_pretty(&report).expect("report serializes");
    fs::write(&report_path, json + "\n").map_err(|e| user(format!("cannot write {}: {e}", report_path.display())))?;
    match format {
        Format::Tsv => write!(out, "{}", bench::render_table(&report)).map_err(io_err)?,
        Format::Json => writeln!(out, "{}", serde_json::to_string(&report.fcfs_comparison).expect("serializes")).map_err(io_err)?,
    }
    if report.runs.iter().any(|r| !r.summary.results_match) {
        return Err(internal("result counts differ from the recorded cardinalities"));
    }
    Ok(())
}
