use preemptql_core::engine::{build_plan, AfterChecks, Always, Deadline, Unlimited};
use preemptql_core::{decode, encode, parse, EngineError, Plan, SolutionMapping, TripleStore};
use preemptql_oracle::gen::{dataset, Dialect, QueryGen};
use preemptql_oracle::{canonical, evaluate};
use proptest::prelude::*;

/// Runs a query to completion, passing the plan through its byte encoding
/// between quanta.
fn run_over_wire(query: &str, st: &TripleStore, deadline: &mut dyn Deadline, limit: usize) -> (Vec<SolutionMapping>, usize) {
    let node = parse(query).unwrap();
    let mut bytes = encode(&build_plan(&node, st).unwrap());
    let mut out = Vec::new();
    let mut quanta = 0;
    loop {
        let mut plan = Plan::load(&decode(&bytes).unwrap(), st).unwrap();
        let q = plan.execute_quantum(st, deadline, limit);
        quanta += 1;
        out.extend(q.mappings);
        if q.complete {
            return (out, quanta);
        }
        bytes = encode(&plan.save(st));
    }
}

#[test]
fn suspension_at_every_yield_point_matches_oracle() {
    for (size, seed) in [(300, 1), (1000, 2), (3000, 3)] {
        let data = dataset(size, seed);
        let st = TripleStore::from_triples(data.clone());
        let mut qg = QueryGen::new(&data, seed * 100, Dialect::Server);
        for _ in 0..40 {
            let q = qg.next_query();
            let (straight, _) = run_over_wire(&q, &st, &mut Unlimited, usize::MAX);
            let (forced, quanta) = run_over_wire(&q, &st, &mut Always, usize::MAX);
            assert_eq!(forced, straight, "{q}");
            assert!(quanta >= straight.len(), "{q}");
            let mut expected = evaluate(&parse(&q).unwrap(), &data);
            let mut got = forced;
            expected.sort();
            got.sort();
            assert_eq!(got, expected, "{q}");
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn any_quantum_and_page_size_preserve_order(seed in any::<u64>(), checks in 1u64..25, limit in 1usize..40) {
        let data = dataset(500, 11);
        let st = TripleStore::from_triples(data.clone());
        let q = QueryGen::new(&data, seed, Dialect::Server).next_query();
        let (straight, _) = run_over_wire(&q, &st, &mut Unlimited, usize::MAX);
        let mut d = AfterChecks::new(checks);
        let mut deadline = move || {
            let hit = d.expired();
            if hit {
                d = AfterChecks::new(checks);
            }
            hit
        };
        let (paged, _) = run_over_wire(&q, &st, &mut deadline, limit);
        prop_assert_eq!(paged, straight);
    }
}

#[test]
fn empty_store_completes_in_one_quantum() {
    let st = TripleStore::from_triples(Vec::new());
    let (rows, quanta) = run_over_wire("SELECT * WHERE { ?s ?p ?o . ?o <p> ?x }", &st, &mut Always, 10);
    assert!(rows.is_empty());
    assert_eq!(quanta, 1);
}

#[test]
fn plans_from_another_dataset_are_stale() {
    let st = canonical::store();
    let (_, saved, _) = canonical::plans().remove(3);
    let other = TripleStore::from_triples(dataset(50, 1));
    assert!(matches!(Plan::load(&saved, &other), Err(EngineError::StalePlan)));
    assert!(Plan::load(&saved, &st).is_ok());
}
