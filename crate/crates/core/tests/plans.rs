use preemptql_core::engine::{build_plan, AfterChecks, OuterState, SavedOp, Stats};
use preemptql_core::store::select_index_for;
use preemptql_core::term::Term;
use preemptql_core::{encode, parse, PatternTerm, Plan, PlanNode, Triple, TriplePattern, TripleStore};
use preemptql_oracle::{canonical, count_matches};

fn wm(local: &str) -> Term {
    Term::iri(format!("http://db.uwaterloo.ca/~galuc/wsdbm/{local}"))
}

/// Retailers offering products, each product with one price.
fn shop() -> (Vec<Triple>, TripleStore) {
    let mut data = Vec::new();
    for p in 0..300 {
        let product = wm(&format!("Product{p}"));
        data.push(Triple::new(product.clone(), wm("price"), Term::literal(format!("{}", 1000 + p * 7))));
        for r in 0..3 {
            data.push(Triple::new(wm(&format!("Retailer{}", (p + r * 11) % 40)), wm("offers"), product.clone()));
        }
    }
    let st = TripleStore::from_triples(data.clone());
    (data, st)
}

const Q2: &str = "PREFIX wm: <http://db.uwaterloo.ca/~galuc/wsdbm/>
SELECT ?v0 ?v1 ?v3 WHERE { ?v0 wm:offers ?v1 . ?v1 wm:price ?v3 . }";

#[test]
fn two_pattern_query_has_four_operators() {
    let q = parse(Q2).unwrap();
    assert_eq!(q.size(), 4);
    let PlanNode::Project(_, join) = &q else { panic!() };
    assert!(matches!(join.as_ref(), PlanNode::Join(a, b) if matches!(**a, PlanNode::Scan(_)) && matches!(**b, PlanNode::Scan(_))));
}

#[test]
fn smaller_pattern_drives_the_loop_and_suspends_mid_inner() {
    let (data, st) = shop();
    let q = parse(Q2).unwrap();
    let saved = build_plan(&q, &st).unwrap();
    let SavedOp::Projection { child, .. } = &saved.root else { panic!("{}", saved.root.pretty()) };
    let SavedOp::IndexLoopJoin { outer, inner, .. } = child.as_ref() else { panic!("{}", saved.root.pretty()) };
    let (SavedOp::IndexScan { pattern: tp2, .. }, SavedOp::IndexScan { pattern: tp1, .. }) = (outer.as_ref(), inner.as_ref()) else {
        panic!()
    };
    assert!(count_matches(tp2, &data) < count_matches(tp1, &data));
    assert_eq!(tp2.predicate, PatternTerm::Term(wm("price")));

    // 223 products fully joined (3 offers each), then 2 offers of the 224th.
    let mut plan = Plan::load(&saved, &st).unwrap();
    let first = plan.execute_quantum(&st, &mut AfterChecks::new(u64::MAX), 223 * 3 + 2);
    assert!(!first.complete);
    let suspended = plan.save(&st);
    let SavedOp::Projection { child, .. } = &suspended.root else { panic!() };
    let SavedOp::IndexLoopJoin { current, outer, inner } = child.as_ref() else { panic!() };
    let SavedOp::IndexScan { position: outer_pos, .. } = outer.as_ref() else { panic!() };
    let SavedOp::IndexScan { pattern: inner_tp, position: inner_pos } = inner.as_ref() else { panic!() };

    let mut price_matches: Vec<&Triple> = data.iter().filter(|t| t.predicate == wm("price")).collect();
    let order = select_index_for(tp2).order();
    price_matches.sort_by(|a, b| {
        let (ka, kb) = ([&a.subject, &a.predicate, &a.object], [&b.subject, &b.predicate, &b.object]);
        order.iter().map(|&i| ka[i]).cmp(order.iter().map(|&i| kb[i]))
    });
    let t224 = price_matches[223];
    assert_eq!(outer_pos.last.as_ref(), Some(t224));
    assert_eq!(current, &OuterState::Inherit);
    let SavedOp::IndexLoopJoin { current: OuterState::Explicit(mu_c), .. } = canonical::spell_out(child) else { panic!() };
    assert_eq!(mu_c.get_named("v1"), Some(&t224.subject));
    assert_eq!(mu_c.get_named("v3"), Some(&t224.object));

    let mut offers: Vec<&Triple> = data.iter().filter(|t| t.predicate == wm("offers") && t.object == t224.subject).collect();
    offers.sort();
    assert_eq!(inner_tp, tp1);
    assert_eq!(inner_tp.substitute(&mu_c).object, PatternTerm::Term(t224.subject.clone()));
    assert_eq!(inner_pos.last.as_ref(), Some(offers[1]));

    let mut rest = Plan::load(&suspended, &st).unwrap();
    let tail = rest.collect(&st);
    let mut whole = Plan::build(&q, &st).unwrap().collect(&st);
    assert_eq!(whole.split_off(first.mappings.len()), tail);
    assert_eq!(whole, first.mappings);
}

#[test]
fn single_pattern_is_a_projected_scan() {
    let (_, st) = shop();
    let saved = build_plan(&parse("SELECT ?v WHERE { ?v <http://db.uwaterloo.ca/~galuc/wsdbm/price> ?p }").unwrap(), &st).unwrap();
    assert!(matches!(&saved.root, SavedOp::Projection { child, .. } if matches!(**child, SavedOp::IndexScan { .. })));
    assert!(encode(&saved).len() <= 512);
}

#[test]
fn joins_are_ordered_by_brute_force_cardinality() {
    let (data, st) = shop();
    let q = parse(
        "PREFIX wm: <http://db.uwaterloo.ca/~galuc/wsdbm/>
         SELECT * WHERE { ?r wm:offers ?p . ?p wm:price ?x . wm:Retailer3 wm:offers ?p }",
    )
    .unwrap();
    let saved = build_plan(&q, &st).unwrap();
    let mut scans = Vec::new();
    fn leaves<'a>(op: &'a SavedOp, out: &mut Vec<&'a TriplePattern>) {
        match op {
            SavedOp::IndexScan { pattern, .. } => out.push(pattern),
            _ => op.children().into_iter().for_each(|c| leaves(c, out)),
        }
    }
    leaves(&saved.root, &mut scans);
    // Saved scans keep their unseeded patterns, in execution order.
    let originals: Vec<TriplePattern> = {
        let PlanNode::Join(a, b) = &q else { panic!() };
        let PlanNode::Join(c, d) = a.as_ref() else { panic!() };
        [c, d, b].iter().map(|n| match n.as_ref() { PlanNode::Scan(tp) => tp.clone(), _ => panic!() }).collect()
    };
    let mut counts: Vec<usize> = originals.iter().map(|tp| count_matches(tp, &data)).collect();
    let executed: Vec<usize> =
        scans.iter().map(|tp| originals.iter().position(|o| o == *tp).expect("fresh plan keeps patterns")).map(|i| counts[i]).collect();
    counts.sort();
    assert_eq!(executed, counts);
}

#[test]
fn suspend_and_resume_work_is_linear_in_plan_size() {
    let (_, st) = shop();
    let q = parse(
        "PREFIX wm: <http://db.uwaterloo.ca/~galuc/wsdbm/>
         SELECT * WHERE { ?r wm:offers ?p . ?p wm:price ?x . ?r2 wm:offers ?p . ?r2 wm:offers ?p2 . ?p2 wm:price ?y }",
    )
    .unwrap();
    let mut plan = Plan::build(&q, &st).unwrap();
    plan.execute_quantum(&st, &mut AfterChecks::new(500), usize::MAX);
    let mut save_stats = Stats::default();
    let saved = plan.save_counting(&st, &mut save_stats);
    let ops = saved.root.size() as u64;
    assert!(save_stats.visits <= ops, "{save_stats:?} for {ops} operators");
    let mut load_stats = Stats::default();
    Plan::load_counting(&saved, &st, &mut load_stats).unwrap();
    assert!(load_stats.visits <= ops);
    let scans = 5;
    let per_search = (st.len() as f64).log2().ceil() as u64 + 2;
    assert!(load_stats.comparisons <= scans * per_search, "{load_stats:?}");
}
