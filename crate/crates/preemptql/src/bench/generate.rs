use std::collections::HashSet;
use std::fs;
use std::io::{self, BufWriter, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use preemptql_core::engine::Unlimited;
use preemptql_core::{parse, Plan, Term, Triple, TripleStore};

use super::{Shape, SpecError, WorkloadSpec};

pub const NS: &str = "http://bench.example.org/";

/// Results are counted in chunks of this many mappings.
const COUNT_CHUNK: usize = 1 << 16;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GeneratedQuery {
    pub name: String,
    pub shape: Shape,
    pub joins: usize,
    #[serde(skip)]
    pub text: String,
    pub file: String,
    pub cardinality: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Workload {
    pub triples: Vec<Triple>,
    pub queries: Vec<GeneratedQuery>,
}

fn entity(i: usize) -> Term {
    Term::iri(format!("{NS}e{i}"))
}

fn predicate(p: usize) -> Term {
    Term::iri(format!("{NS}p{p}"))
}

/// Fan-out class of a predicate: 0 functional, 1 zero to three objects,
/// 2 few subjects with many objects each.
fn class(p: usize, predicates: usize) -> usize {
    p * 3 / predicates
}

/// Edges `(subject, object)` per predicate, as entity numbers.
type Edges = Vec<Vec<(usize, usize)>>;

fn edges(spec: &WorkloadSpec, rng: &mut ChaCha8Rng) -> Edges {
    let n = spec.triples / 16;
    let preds = spec.predicates;
    let mut out: Edges = vec![Vec::new(); preds];
    let mut total = 0;
    let mut seen = HashSet::new();
    let mut push = |out: &mut Edges, total: &mut usize, p: usize, s: usize, o: usize| {
        if *total < spec.triples && seen.insert((p, s, o)) {
            out[p].push((s, o));
            *total += 1;
        }
    };
    for p in (0..preds).filter(|&p| class(p, preds) == 0) {
        for s in 0..n {
            push(&mut out, &mut total, p, s, rng.random_range(0..n));
        }
    }
    for p in (0..preds).filter(|&p| class(p, preds) == 1) {
        for s in 0..n {
            for _ in 0..rng.random_range(0..=3) {
                push(&mut out, &mut total, p, s, rng.random_range(0..n));
            }
        }
    }
    let sparse: Vec<usize> = (0..preds).filter(|&p| class(p, preds) == 2).collect();
    // enough hubs that the sparse predicates can hold the rest twice over
    let room = (2 * (spec.triples - total)).div_ceil(sparse.len() * n);
    let hubs = (n / 20).max(room).clamp(1, n);
    while total < spec.triples {
        let p = sparse[rng.random_range(0..sparse.len())];
        let s = rng.random_range(0..hubs) * (n / hubs);
        push(&mut out, &mut total, p, s, rng.random_range(0..n));
    }
    out
}

/// The synthetic dataset alone, in generation order.
pub fn dataset(spec: &WorkloadSpec) -> Result<Vec<Triple>, SpecError> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    Ok(to_triples(&edges(spec, &mut rng)))
}

fn to_triples(edges: &Edges) -> Vec<Triple> {
    let mut out = Vec::new();
    for (p, list) in edges.iter().enumerate() {
        for &(s, o) in list {
            out.push(Triple::new(entity(s), predicate(p), entity(o)));
        }
    }
    out
}

/// Query text for a shape. Patterns use distinct predicates; `bound` puts
/// an edge's object in place of the last pattern's object variable.
pub fn query_text(shape: Shape, preds: &[usize], bound: Option<usize>) -> String {
    let k = preds.len();
    let mut pats: Vec<(String, usize, String)> = Vec::new();
    match shape {
        Shape::Star => {
            for (i, &p) in preds.iter().enumerate() {
                pats.push(("?s".into(), p, format!("?o{i}")));
            }
        }
        Shape::Path => {
            for (i, &p) in preds.iter().enumerate() {
                pats.push((format!("?x{i}"), p, format!("?x{}", i + 1)));
            }
        }
        Shape::Snowflake => {
            let arms = k.div_ceil(2);
            for (i, &p) in preds[..arms].iter().enumerate() {
                pats.push(("?c".into(), p, format!("?a{i}")));
            }
            for (i, &p) in preds[arms..].iter().enumerate() {
                pats.push((format!("?a{i}"), p, format!("?b{i}")));
            }
        }
    }
    if let (Some(o), Some(last)) = (bound, pats.last_mut()) {
        last.2 = format!("b:e{o}");
    }
    let mut text = format!("PREFIX b: <{NS}>\nSELECT * WHERE {{\n");
    for (s, p, o) in pats {
        text.push_str(&format!("  {s} b:p{p} {o} .\n"));
    }
    text.push_str("}\n");
    text
}

/// Number of results of a server-fragment query.
pub fn cardinality(store: &TripleStore, text: &str) -> u64 {
    let node = parse(text).expect("generated query parses");
    let mut plan = Plan::build(&node, store).expect("generated query is in the server fragment");
    let mut n = 0;
    loop {
        let q = plan.execute_quantum(store, &mut Unlimited, COUNT_CHUNK);
        n += q.mappings.len() as u64;
        if q.complete {
            return n;
        }
    }
}

/// Dataset plus queries with their cardinalities.
pub fn generate(spec: &WorkloadSpec) -> Result<Workload, SpecError> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let edges = edges(spec, &mut rng);
    let triples = to_triples(&edges);
    let store = TripleStore::from_triples(triples.clone());
    let preds = spec.predicates;
    let mut queries = Vec::new();
    for i in 0..spec.queries {
        let shape = spec.shapes[i % spec.shapes.len()];
        let joins = rng.random_range(spec.min_joins..=spec.max_joins);
        let mut chosen: Vec<usize> = (0..preds).collect();
        chosen.shuffle(&mut rng);
        if shape == Shape::Path {
            // functional predicates first keep long paths from exploding
            chosen.sort_by_key(|&p| class(p, preds));
        }
        chosen.truncate(joins);
        chosen.shuffle(&mut rng);
        let bound = if rng.random_bool(spec.selectivity) {
            let list = &edges[*chosen.last().unwrap()];
            (!list.is_empty()).then(|| list[rng.random_range(0..list.len())].1)
        } else {
            None
        };
        let text = query_text(shape, &chosen, bound);
        let name = format!("q{i:03}");
        queries.push(GeneratedQuery {
            cardinality: cardinality(&store, &text),
            file: format!("queries/{name}.rq"),
            name,
            shape,
            joins,
            text,
        });
    }
    Ok(Workload { triples, queries })
}

/// Writes `dataset.nt`, `queries/*.rq` and `workload.json` under `dir`.
pub fn write_workload(workload: &Workload, dir: &Path) -> io::Result<()> {
    fs::create_dir_all(dir.join("queries"))?;
    let mut out = BufWriter::new(fs::File::create(dir.join("dataset.nt"))?);
    for t in &workload.triples {
        writeln!(out, "{t}")?;
    }
    out.flush()?;
    for q in &workload.queries {
        fs::write(dir.join(&q.file), &q.text)?;
    }
    let mut manifest = serde_json::to_string_pretty(&workload.queries).map_err(io::Error::other)?;
    manifest.push('\n');
    fs::write(dir.join("workload.json"), manifest)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn star_with_three_joins_shares_the_subject() {
        let text = query_text(Shape::Star, &[4, 1, 7], None);
        let patterns: Vec<&str> = text.lines().filter(|l| l.trim_end().ends_with(" .")).collect();
        assert_eq!(patterns.len(), 3);
        assert!(patterns.iter().all(|l| l.trim_start().starts_with("?s ")));
    }

    fn scans(node: &preemptql_core::PlanNode) -> usize {
        match node {
            preemptql_core::PlanNode::Scan(_) => 1,
            n => n.children().into_iter().map(scans).sum(),
        }
    }

    #[test]
    fn shapes_have_one_pattern_per_join() {
        for shape in [Shape::Star, Shape::Path, Shape::Snowflake] {
            for k in 1..=10 {
                let preds: Vec<usize> = (0..k).collect();
                let node = parse(&query_text(shape, &preds, Some(3))).unwrap();
                assert_eq!(scans(&node), k, "{shape} {k}");
            }
        }
    }

    #[test]
    fn dataset_has_the_requested_size() {
        let spec = WorkloadSpec { triples: 3000, ..WorkloadSpec::default() };
        let data = dataset(&spec).unwrap();
        assert_eq!(data.len(), 3000);
        assert_eq!(data.iter().collect::<HashSet<_>>().len(), 3000);
    }

    #[test]
    fn smallest_datasets_fill_up() {
        for predicates in [3, 6, 10] {
            let spec = WorkloadSpec { triples: 16 * 17, predicates, max_joins: 3, ..WorkloadSpec::default() };
            assert_eq!(dataset(&spec).unwrap().len(), 272);
        }
    }
}
