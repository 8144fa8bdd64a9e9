use std::fmt::Write as _;
use std::io::{BufRead, BufReader, Read};
use std::path::Path;
use std::process::{Child, Command, Stdio};
use std::sync::{Arc, Barrier};
use std::thread;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use preemptql_core::client::{Client, ClientConfig};

use super::{parse_quantum, Workload, WorkloadSpec};
use crate::http::{self, HttpTransport};

pub const REPORT_VERSION: u32 = 1;

/// One query execution as seen by its client.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryRun {
    pub name: String,
    pub client: usize,
    pub results: u64,
    pub expected: Option<u64>,
    pub requests: u64,
    pub bytes_sent: u64,
    pub bytes_received: u64,
    pub suspended_pages: u64,
    pub plan_bytes_mean: f64,
    pub plan_bytes_max: u64,
    pub suspend_ms_mean: f64,
    pub resume_ms_mean: f64,
    /// Start of the query to its first result, or to its end when empty.
    pub tfr_ms: f64,
    /// Start of the query to its last result.
    pub completion_ms: f64,
    /// Start of the workload to the end of the query.
    pub finished_at_ms: f64,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub queries: usize,
    pub failed: usize,
    pub results: u64,
    pub results_match: bool,
    pub wct_ms: f64,
    pub mean_completion_ms: f64,
    pub mean_tfr_ms: f64,
    pub requests: u64,
    pub bytes_sent: u64,
    pub bytes_received: u64,
    pub suspend_ms_mean: f64,
    pub resume_ms_mean: f64,
    pub plan_bytes_mean: f64,
    pub plan_bytes_max: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ServerRun {
    /// `None` is the infinite quantum.
    pub quantum_ms: Option<u64>,
    pub summary: RunSummary,
    pub queries: Vec<QueryRun>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub quantum_ms: u64,
    /// Preemptive over FCFS; below 1 means preemption is faster.
    pub completion_ratio: f64,
    pub tfr_ratio: f64,
    pub wct_ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub version: u32,
    pub spec: WorkloadSpec,
    pub runs: Vec<ServerRun>,
    pub fcfs_comparison: Vec<Comparison>,
}

fn mean(xs: impl IntoIterator<Item = f64>) -> f64 {
    let (sum, n) = xs.into_iter().fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

/// A client's sequence of `(name, query text, expected cardinality)`.
pub type ClientRun = Vec<(String, String, Option<u64>)>;

/// Runs every client's queries in sequence, all clients in parallel. Client
/// `i` starts `i * stagger` after the common start.
pub fn run_clients(endpoint: &str, clients: Vec<ClientRun>, config: &ClientConfig, latency: Duration, stagger: Duration) -> Vec<QueryRun> {
    let barrier = Arc::new(Barrier::new(clients.len()));
    let handles: Vec<_> = clients
        .into_iter()
        .enumerate()
        .map(|(ci, queries)| {
            let barrier = barrier.clone();
            let endpoint = endpoint.to_string();
            let config = config.clone();
            thread::spawn(move || {
                barrier.wait();
                let origin = Instant::now();
                thread::sleep(stagger * ci as u32);
                queries.into_iter().map(|(name, text, expected)| run_one(&endpoint, &config, latency, ci, name, &text, expected, origin)).collect::<Vec<_>>()
            })
        })
        .collect();
    handles.into_iter().flat_map(|h| h.join().expect("client thread panicked")).collect()
}

#[allow(clippy::too_many_arguments)]
fn run_one(
    endpoint: &str,
    config: &ClientConfig,
    latency: Duration,
    client: usize,
    name: String,
    text: &str,
    expected: Option<u64>,
    origin: Instant,
) -> QueryRun {
    let mut transport = HttpTransport::new(config);
    transport.latency = latency;
    let mut c = Client::new(transport, ClientConfig { endpoint: endpoint.to_string(), ..config.clone() });
    let mut results = 0u64;
    let outcome = http::execute(&mut c, text, &mut |_| results += 1);
    let stats = c.stats;
    let pages = &c.transport.pages;
    let suspended: Vec<_> = pages.iter().filter(|p| p.stats.plan_bytes > 0).collect();
    let resumed: Vec<_> = pages.iter().filter(|p| p.resumed).collect();
    QueryRun {
        name,
        client,
        results,
        expected,
        requests: stats.http_requests,
        bytes_sent: stats.bytes_sent,
        bytes_received: stats.bytes_received,
        suspended_pages: stats.suspended_pages,
        plan_bytes_mean: mean(suspended.iter().map(|p| p.stats.plan_bytes as f64)),
        plan_bytes_max: suspended.iter().map(|p| p.stats.plan_bytes).max().unwrap_or(0),
        suspend_ms_mean: mean(suspended.iter().map(|p| p.stats.suspend_ns as f64 / 1e6)),
        resume_ms_mean: mean(resumed.iter().map(|p| p.stats.resume_ns as f64 / 1e6)),
        tfr_ms: stats.first_result_ms.unwrap_or(stats.total_ms),
        completion_ms: stats.total_ms,
        finished_at_ms: origin.elapsed().as_secs_f64() * 1e3,
        error: outcome.err().map(|e| e.to_string()),
    }
}

pub fn summarize(queries: &[QueryRun]) -> RunSummary {
    let suspended: Vec<&QueryRun> = queries.iter().filter(|q| q.suspended_pages > 0).collect();
    let weighted = |f: fn(&QueryRun) -> f64| {
        let pages: u64 = suspended.iter().map(|q| q.suspended_pages).sum();
        if pages == 0 {
            0.0
        } else {
            suspended.iter().map(|q| f(q) * q.suspended_pages as f64).sum::<f64>() / pages as f64
        }
    };
    RunSummary {
        queries: queries.len(),
        failed: queries.iter().filter(|q| q.error.is_some()).count(),
        results: queries.iter().map(|q| q.results).sum(),
        results_match: queries.iter().all(|q| q.error.is_none() && q.expected.is_none_or(|e| e == q.results)),
        wct_ms: queries.iter().map(|q| q.finished_at_ms).fold(0.0, f64::max),
        mean_completion_ms: mean(queries.iter().map(|q| q.completion_ms)),
        mean_tfr_ms: mean(queries.iter().map(|q| q.tfr_ms)),
        requests: queries.iter().map(|q| q.requests).sum(),
        bytes_sent: queries.iter().map(|q| q.bytes_sent).sum(),
        bytes_received: queries.iter().map(|q| q.bytes_received).sum(),
        suspend_ms_mean: weighted(|q| q.suspend_ms_mean),
        resume_ms_mean: mean(queries.iter().filter(|q| q.requests > 1).map(|q| q.resume_ms_mean)),
        plan_bytes_mean: weighted(|q| q.plan_bytes_mean),
        plan_bytes_max: queries.iter().map(|q| q.plan_bytes_max).max().unwrap_or(0),
    }
}

/// A server child process, killed on drop.
struct Spawned {
    child: Child,
    endpoint: String,
}

impl Drop for Spawned {
    fn drop(&mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

fn spawn_server(bin: &Path, data: &Path, quantum: &str, spec: &WorkloadSpec) -> Result<Spawned, String> {
    let mut child = Command::new(bin)
        .arg("serve")
        .arg("--data")
        .arg(data)
        .args(["--port", "0", "--quantum-ms", quantum])
        .args(["--workers", &spec.workers.to_string()])
        .args(["--queue-size", &(spec.clients * 2).max(100).to_string()])
        .args(["--page-limit", &spec.page_limit.to_string()])
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .map_err(|e| format!("cannot start {}: {e}", bin.display()))?;
    let mut line = String::new();
    let stdout = child.stdout.take().expect("piped stdout");
    BufReader::new(stdout).read_line(&mut line).map_err(|e| e.to_string())?;
    match line.trim().strip_prefix("listening on ") {
        Some(addr) => Ok(Spawned { endpoint: addr.to_string(), child }),
        None => {
            let _ = child.kill();
            let mut err = String::new();
            if let Some(mut s) = child.stderr.take() {
                let _ = s.read_to_string(&mut err);
            }
            let _ = child.wait();
            Err(format!("server failed to start: {}", err.trim()))
        }
    }
}

/// Runs the workload once per quantum against a freshly spawned server.
pub fn run(spec: &WorkloadSpec, workload: &Workload, data: &Path, quanta: &[String], server_bin: &Path) -> Result<Report, String> {
    let parsed: Vec<Option<Duration>> = quanta.iter().map(|q| parse_quantum(q)).collect::<Result<_, _>>()?;
    if !parsed.contains(&None) || parsed.iter().filter(|q| q.is_some()).count() < 2 {
        return Err("quanta must include \"inf\" and at least two finite values".into());
    }
    let config = ClientConfig::default();
    let mut runs = Vec::new();
    for (label, quantum) in quanta.iter().zip(&parsed) {
        let server = spawn_server(server_bin, data, label.trim(), spec)?;
        log::info!("quantum {label}: server at {}", server.endpoint);
        let mut clients: Vec<ClientRun> = vec![Vec::new(); spec.clients];
        for (i, q) in workload.queries.iter().enumerate() {
            clients[i % spec.clients].push((q.name.clone(), q.text.clone(), Some(q.cardinality)));
        }
        let mut queries = run_clients(&server.endpoint, clients, &config, Duration::from_millis(spec.latency_ms), Duration::ZERO);
        drop(server);
        queries.sort_by(|a, b| a.name.cmp(&b.name));
        runs.push(ServerRun { quantum_ms: quantum.map(|d| d.as_millis() as u64), summary: summarize(&queries), queries });
    }
    let fcfs = runs.iter().find(|r| r.quantum_ms.is_none()).expect("checked above").summary.clone();
    let ratio = |a: f64, b: f64| if b > 0.0 { a / b } else { 0.0 };
    let fcfs_comparison = runs
        .iter()
        .filter_map(|r| {
            Some(Comparison {
                quantum_ms: r.quantum_ms?,
                completion_ratio: ratio(r.summary.mean_completion_ms, fcfs.mean_completion_ms),
                tfr_ratio: ratio(r.summary.mean_tfr_ms, fcfs.mean_tfr_ms),
                wct_ratio: ratio(r.summary.wct_ms, fcfs.wct_ms),
            })
        })
        .collect();
    Ok(Report { version: REPORT_VERSION, spec: spec.clone(), runs, fcfs_comparison })
}

pub fn render_table(report: &Report) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:>8} {:>9} {:>10} {:>10} {:>9} {:>9} {:>9} {:>9} {:>9} {:>12} {:>7}",
        "quantum", "WCT ms", "compl ms", "TFR ms", "susp ms", "res ms", "plan B", "plan max", "requests", "bytes recv", "ok"
    );
    for r in &report.runs {
        let s = &r.summary;
        let q = r.quantum_ms.map_or("inf".to_string(), |q| q.to_string());
        let _ = writeln!(
            out,
            "{q:>8} {:>9.1} {:>10.1} {:>10.1} {:>9.3} {:>9.3} {:>9.0} {:>9} {:>9} {:>12} {:>7}",
            s.wct_ms,
            s.mean_completion_ms,
            s.mean_tfr_ms,
            s.suspend_ms_mean,
            s.resume_ms_mean,
            s.plan_bytes_mean,
            s.plan_bytes_max,
            s.requests,
            s.bytes_received,
            if s.results_match { "yes" } else { "NO" },
        );
    }
    let _ = writeln!(out, "\nagainst FCFS (ratio < 1 is faster):");
    for c in &report.fcfs_comparison {
        let _ = writeln!(
            out,
            "{:>6} ms  completion {:.3}  TFR {:.3}  WCT {:.3}",
            c.quantum_ms, c.completion_ratio, c.tfr_ratio, c.wct_ratio
        );
    }
    out
}
