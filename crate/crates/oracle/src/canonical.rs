//! Ten fixed saved plans covering every operator, outer-mapping form and
//! term kind, captured at deterministic suspension points.

use std::path::PathBuf;

use preemptql_core::engine::{AfterChecks, OuterState, Plan, SavedOp, SavedPlan};
use preemptql_core::term::{Term, Triple, XSD_DECIMAL};
use preemptql_core::{encode, parse, TripleStore};

fn ex(local: &str) -> Term {
    Term::iri(format!("http://example.org/{local}"))
}

pub fn store() -> TripleStore {
    let mut t = Vec::new();
    let people = ["alice", "bob", "carol", "dave", "erin", "frank"];
    for (i, p) in people.iter().enumerate() {
        let s = ex(p);
        t.push(Triple::new(s.clone(), ex("type"), ex(if i % 2 == 0 { "Person" } else { "Agent" })));
        t.push(Triple::new(s.clone(), ex("age"), Term::integer(20 + 7 * i as i64)));
        t.push(Triple::new(s.clone(), ex("name"), Term::lang_literal(p.to_uppercase(), "en")));
        t.push(Triple::new(s.clone(), ex("knows"), ex(people[(i + 1) % people.len()])));
        t.push(Triple::new(s.clone(), ex("likes"), ex(people[(i + 2) % people.len()])));
        t.push(Triple::new(s, ex("score"), Term::typed_literal(format!("{i}.25"), XSD_DECIMAL)));
    }
    t.push(Triple::new(Term::blank("n1"), ex("knows"), ex("alice")));
    t.push(Triple::new(Term::blank("n1"), ex("name"), Term::literal("anon \"quoted\"")));
    t.push(Triple::new(Term::blank("n1"), ex("type"), ex("Person")));
    TripleStore::from_triples(t)
}

/// (name, query, deadline checks before suspension, page limit).
const PLANS: [(&str, &str, u64, usize); 10] = [
    ("scan_fresh", "SELECT * WHERE { ?s <http://example.org/knows> ?o }", 0, 0),
    ("scan_suspended", "SELECT * WHERE { ?s <http://example.org/knows> ?o }", u64::MAX, 3),
    ("projection", "SELECT ?s WHERE { ?s <http://example.org/type> <http://example.org/Person> }", 2, usize::MAX),
    ("ilj_explicit", "SELECT * WHERE { ?s <http://example.org/type> <http://example.org/Agent> . ?s <http://example.org/name> ?n . ?s <http://example.org/age> ?a }", 4, usize::MAX),
    ("ilj_inherit", "SELECT ?s ?o WHERE { ?s <http://example.org/type> <http://example.org/Person> . ?s <http://example.org/knows> ?o . ?s <http://example.org/likes> ?l }", 3, usize::MAX),
    ("merge_join", "SELECT * WHERE { ?a <http://example.org/knows> ?x . ?b <http://example.org/likes> ?x }", 5, usize::MAX),
    ("union", "SELECT * WHERE { { ?s <http://example.org/type> <http://example.org/Person> } UNION { ?s <http://example.org/type> <http://example.org/Agent> } }", 6, usize::MAX),
    ("filter_numeric", "SELECT * WHERE { ?s <http://example.org/age> ?a . ?s <http://example.org/score> ?x FILTER(?a > 21 && ?x <= 4.5) }", 4, usize::MAX),
    ("filter_terms", "SELECT * WHERE { ?s <http://example.org/name> ?n FILTER(!(?n = \"BOB\"@en) || ?s != <http://example.org/carol>) }", 3, usize::MAX),
    ("blank_constant", "SELECT ?p ?o WHERE { _:n1 ?p ?o . ?o ?q ?r }", 2, usize::MAX),
];

/// Names and encodings of the canonical plans, in a fixed order.
pub fn plans() -> Vec<(&'static str, SavedPlan, Vec<u8>)> {
    let st = store();
    PLANS
        .iter()
        .map(|&(name, query, checks, limit)| {
            let node = parse(query).expect("canonical query parses");
            let mut plan = Plan::build(&node, &st).expect("canonical query builds");
            if checks > 0 {
                let q = plan.execute_quantum(&st, &mut AfterChecks::new(checks), limit);
                assert!(!q.complete, "{name} finished before its suspension point");
            }
            let mut saved = plan.save(&st);
            if name == "ilj_explicit" {
                saved.root = spell_out(&saved.root);
            }
            let bytes = encode(&saved);
            (name, saved, bytes)
        })
        .collect()
}

/// Replaces inherited outer mappings of joins over a scan by the mapping
/// itself. The resulting plan is equivalent, just larger.
pub fn spell_out(op: &SavedOp) -> SavedOp {
    match op {
        SavedOp::IndexLoopJoin { current, outer, inner } => {
            let current = match (current, outer.as_ref()) {
                (OuterState::Inherit, SavedOp::IndexScan { pattern, position }) => {
                    let last = position.last.as_ref().expect("inherited mapping needs a read scan");
                    OuterState::Explicit(pattern.matches(last).expect("last triple matches"))
                }
                (c, _) => c.clone(),
            };
            SavedOp::IndexLoopJoin { current, outer: Box::new(spell_out(outer)), inner: Box::new(spell_out(inner)) }
        }
        SavedOp::Projection { vars, child } => SavedOp::Projection { vars: vars.clone(), child: Box::new(spell_out(child)) },
        SavedOp::Filter { expr, child } => SavedOp::Filter { expr: expr.clone(), child: Box::new(spell_out(child)) },
        other => other.clone(),
    }
}

/// Where the golden encodings live.
pub fn golden_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../core/tests/golden")
}
