use preemptql_core::client::{Client, ClientConfig, ClientError, LocalEndpoint, OptionalStrategy, Page, Request, Transport, TransportError};
use preemptql_core::engine::{run_preempted, Always, Deadline, Unlimited};
use preemptql_core::term::Term;
use preemptql_core::{parse, SolutionMapping, Triple, TripleStore};
use preemptql_oracle::gen::{dataset, Dialect, QueryGen};
use preemptql_oracle::{canonical, evaluate, verify};

type Local<'a> = LocalEndpoint<'a, Box<dyn FnMut() -> Box<dyn Deadline>>>;

fn forced(st: &TripleStore, page_limit: usize) -> Local<'_> {
    LocalEndpoint::new(st, page_limit, Box::new(|| Box::new(Always) as Box<dyn Deadline>))
}

fn unlimited(st: &TripleStore) -> Local<'_> {
    LocalEndpoint::new(st, usize::MAX, Box::new(|| Box::new(Unlimited) as Box<dyn Deadline>))
}

fn config(strategy: OptionalStrategy, block: usize) -> ClientConfig {
    ClientConfig { endpoint: "local".into(), optional_strategy: strategy, bind_block_size: block, ..ClientConfig::default() }
}

#[test]
fn generated_full_queries_match_oracle() {
    let data = dataset(600, 21);
    let st = TripleStore::from_triples(data.clone());
    let mut qg = QueryGen::new(&data, 77, Dialect::Full);
    let strategies = [OptionalStrategy::Auto, OptionalStrategy::Bind, OptionalStrategy::Opt];
    for i in 0..90 {
        let q = qg.next_query();
        let node = parse(&q).unwrap();
        let mut client = Client::new(forced(&st, 5), config(strategies[i % 3], 1 + i % 7));
        let rows = client.collect(&q).unwrap_or_else(|e| panic!("{q}: {e}"));
        verify(&node, &rows, &data).unwrap_or_else(|e| panic!("{q}: {e}"));
    }
}

fn ex(s: &str) -> Term {
    Term::iri(format!("http://example.org/{s}"))
}

/// Every left mapping has exactly one partner.
fn worst_case_optional(n: usize) -> (Vec<Triple>, TripleStore) {
    let mut data = Vec::new();
    for i in 0..n {
        data.push(Triple::new(ex(&format!("actor{i}")), ex("name"), Term::literal(format!("Actor {i}"))));
        data.push(Triple::new(ex(&format!("actor{i}")), ex("birthPlace"), ex(&format!("city{}", i % 7))));
    }
    let st = TripleStore::from_triples(data.clone());
    (data, st)
}

const OPTIONAL_QUERY: &str = "PREFIX ex: <http://example.org/>
SELECT * WHERE { ?a ex:name ?n OPTIONAL { ?a ex:birthPlace ?c } }";

#[test]
fn optional_strategies_agree_and_differ_in_requests() {
    let (data, st) = worst_case_optional(100);
    let node = parse(OPTIONAL_QUERY).unwrap();
    let mut by_strategy = Vec::new();
    for strategy in [OptionalStrategy::Bind, OptionalStrategy::Opt] {
        let mut client = Client::new(unlimited(&st), config(strategy, 20));
        let rows = client.collect(OPTIONAL_QUERY).unwrap();
        verify(&node, &rows, &data).unwrap();
        by_strategy.push((preemptql_oracle::canonical(rows), client.stats.http_requests));
    }
    assert_eq!(by_strategy[0].0, by_strategy[1].0);
    // One request for the left side, then 100 / 20 blocks.
    assert_eq!(by_strategy[0].1, 1 + 5);
    assert_eq!(by_strategy[1].1, 1);
}

#[test]
fn vacuous_optional_returns_left_side() {
    let (data, st) = worst_case_optional(30);
    let q = "PREFIX ex: <http://example.org/> SELECT * WHERE { ?a ex:name ?n OPTIONAL { ?a ex:missing ?c } }";
    for strategy in [OptionalStrategy::Bind, OptionalStrategy::Opt] {
        let rows = Client::new(forced(&st, 4), config(strategy, 3)).collect(q).unwrap();
        let left = evaluate(&parse("PREFIX ex: <http://example.org/> SELECT * WHERE { ?a ex:name ?n }").unwrap(), &data);
        assert_eq!(preemptql_oracle::canonical(rows), preemptql_oracle::canonical(left));
    }
}

#[test]
fn bgp_requests_equal_quanta() {
    let st = canonical::store();
    let q = "SELECT * WHERE { ?s <http://example.org/knows> ?o . ?o <http://example.org/age> ?a }";
    let (rows, quanta) = run_preempted(&parse(q).unwrap(), &st, &mut Always, usize::MAX).unwrap();
    let mut client = Client::new(forced(&st, usize::MAX), config(OptionalStrategy::Auto, 20));
    assert_eq!(client.collect(q).unwrap(), rows);
    assert_eq!(client.stats.http_requests, quanta as u64);
    assert_eq!(client.stats.suspended_pages, quanta as u64 - 1);
}

#[test]
fn transfer_overhead_is_the_saved_plans() {
    let st = canonical::store();
    let q = "SELECT * WHERE { ?s ?p ?o }";
    let mut client = Client::new(forced(&st, 3), config(OptionalStrategy::Auto, 20));
    let rows = client.collect(q).unwrap();
    let result_bytes: u64 = rows.iter().map(|m| m.to_string().len() as u64).sum();
    assert_eq!(client.stats.bytes_received - result_bytes, client.stats.plan_bytes_received);
    assert!(client.stats.suspended_pages > 0);
}

fn one(rows: &[SolutionMapping], var: &str) -> Term {
    assert_eq!(rows.len(), 1, "{rows:?}");
    rows[0].get_named(var).cloned().unwrap()
}

#[test]
fn client_operators_on_fixtures() {
    let data = vec![
        Triple::new(ex("a"), ex("v"), Term::integer(2)),
        Triple::new(ex("b"), ex("v"), Term::integer(4)),
        Triple::new(ex("a"), ex("t"), ex("T")),
        Triple::new(ex("b"), ex("t"), ex("T")),
    ];
    let st = TripleStore::from_triples(data.clone());
    let run = |q: &str| {
        let rows = Client::new(forced(&st, 1), config(OptionalStrategy::Auto, 20)).collect(q).unwrap();
        verify(&parse(q).unwrap(), &rows, &data).unwrap();
        rows
    };
    let avg = run("SELECT (AVG(?x) AS ?m) WHERE { ?s <http://example.org/v> ?x }");
    assert_eq!(one(&avg, "m").numeric_value(), Some(3.0));
    let distinct = run("SELECT DISTINCT ?t WHERE { { ?s <http://example.org/t> ?t } UNION { ?s <http://example.org/t> ?t } }");
    assert_eq!(one(&distinct, "t"), ex("T"));
    let minus = run("SELECT * WHERE { ?s <http://example.org/v> ?x MINUS { ?s <http://example.org/t> ?t } }");
    assert!(minus.is_empty());
    let count = run("SELECT ?t (COUNT(*) AS ?n) WHERE { ?s <http://example.org/t> ?t } GROUP BY ?t");
    assert_eq!(one(&count, "n"), Term::integer(2));
    let exists = run("SELECT ?s WHERE { ?s <http://example.org/v> ?x FILTER EXISTS { ?s <http://example.org/t> ?t } FILTER(?x > 3) }");
    assert_eq!(one(&exists, "s"), ex("b"));
}

/// A server whose data changes underneath its clients.
struct Swap<'a> {
    old: Local<'a>,
    new: Local<'a>,
    calls: usize,
    /// Fresh queries keep hitting the old data; only plans see the new one.
    split: bool,
}

impl Transport for Swap<'_> {
    fn post(&mut self, endpoint: &str, request: &Request) -> Result<Page, TransportError> {
        self.calls += 1;
        let old = if self.split { matches!(request, Request::Query(_)) } else { self.calls == 1 };
        if old {
            self.old.post(endpoint, request)
        } else {
            self.new.post(endpoint, request)
        }
    }
}

#[test]
fn stale_plans_restart_once_then_fail() {
    let st = canonical::store();
    let other = TripleStore::from_triples(dataset(40, 5));
    let q = "SELECT * WHERE { ?s <http://example.org/knows> ?o }";

    let swap = Swap { old: forced(&st, 1), new: forced(&other, usize::MAX), calls: 0, split: false };
    let mut client = Client::new(swap, config(OptionalStrategy::Auto, 20));
    let rows = client.collect(q).unwrap();
    let fresh = evaluate(&parse(q).unwrap(), &other.triples().collect::<Vec<_>>());
    // one page from the old data, then everything again from the restart
    assert_eq!(rows.len(), 1 + fresh.len());

    let swap = Swap { old: forced(&st, 1), new: forced(&other, usize::MAX), calls: 0, split: true };
    let mut client = Client::new(swap, config(OptionalStrategy::Auto, 20));
    assert_eq!(client.collect(q), Err(ClientError::Stale));
    assert_eq!(client.transport.calls, 4);
}
