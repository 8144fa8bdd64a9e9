//! Synthetic workloads and the metrics runner.

mod generate;
mod run;

use std::fmt;
use std::time::Duration;

use serde::{Deserialize, Serialize};

pub use generate::{cardinality, dataset, generate, query_text, write_workload, GeneratedQuery, Workload, NS};
pub use run::{
    render_table, run, run_clients, summarize, ClientRun, Comparison, QueryRun, Report, RunSummary, ServerRun,
    REPORT_VERSION,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Shape {
    Star,
    Path,
    Snowflake,
}

impl fmt::Display for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Shape::Star => "star",
            Shape::Path => "path",
            Shape::Snowflake => "snowflake",
        })
    }
}

/// Benchmark parameters, read from a JSON file. Missing fields take their
/// defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WorkloadSpec {
    pub triples: usize,
    pub queries: usize,
    pub shapes: Vec<Shape>,
    pub min_joins: usize,
    pub max_joins: usize,
    /// Number of predicates; each third forms one fan-out class.
    pub predicates: usize,
    /// Fraction of queries with one pattern bound to a constant.
    pub selectivity: f64,
    pub clients: usize,
    /// Quanta in milliseconds, `"inf"` for FCFS.
    pub quanta: Vec<String>,
    pub workers: usize,
    pub page_limit: usize,
    pub latency_ms: u64,
    pub seed: u64,
}

impl Default for WorkloadSpec {
    fn default() -> Self {
        WorkloadSpec {
            triples: 10_000,
            queries: 12,
            shapes: vec![Shape::Star, Shape::Path, Shape::Snowflake],
            min_joins: 1,
            max_joins: 10,
            predicates: 12,
            selectivity: 0.3,
            clients: 4,
            quanta: vec!["75".into(), "1000".into(), "inf".into()],
            workers: 4,
            page_limit: 2000,
            latency_ms: 0,
            seed: 42,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SpecError(pub String);

impl fmt::Display for SpecError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "invalid workload spec: {}", self.0)
    }
}

impl std::error::Error for SpecError {}

impl WorkloadSpec {
    pub fn validate(&self) -> Result<(), SpecError> {
        let err = |m: String| Err(SpecError(m));
        if self.shapes.is_empty() {
            return err("no query shapes".into());
        }
        if self.min_joins == 0 || self.min_joins > self.max_joins || self.max_joins > 10 {
            return err(format!("join range {}..={} outside 1..=10", self.min_joins, self.max_joins));
        }
        if self.predicates < 3 {
            return err("need at least 3 predicates".into());
        }
        if self.max_joins > self.predicates {
            return err(format!("{} joins need that many distinct predicates, only {} available", self.max_joins, self.predicates));
        }
        if self.triples < 16 * self.predicates.max(17) {
            let min = 16 * self.predicates.max(17);
            return err(format!("{} triples are too few for {} predicates, need at least {min}", self.triples, self.predicates));
        }
        if !(0.0..=1.0).contains(&self.selectivity) {
            return err("selectivity must be within [0, 1]".into());
        }
        if self.clients == 0 || self.workers == 0 || self.page_limit == 0 {
            return err("clients, workers and page_limit must be positive".into());
        }
        for q in &self.quanta {
            parse_quantum(q).map_err(SpecError)?;
        }
        Ok(())
    }
}

/// `"inf"` (or `"fcfs"`) is the infinite quantum.
pub fn parse_quantum(s: &str) -> Result<Option<Duration>, String> {
    match s.trim() {
        "inf" | "fcfs" => Ok(None),
        n => match n.parse::<u64>() {
            Ok(0) | Err(_) => Err(format!("bad quantum {s:?}: expected a positive number of milliseconds or \"inf\"")),
            Ok(ms) => Ok(Some(Duration::from_millis(ms))),
        },
    }
}

pub fn parse_quanta(s: &str) -> Result<Vec<Option<Duration>>, String> {
    s.split(',').map(parse_quantum).collect()
}
