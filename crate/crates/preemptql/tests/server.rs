use std::net::TcpListener;
use std::sync::Arc;
use std::thread;
use std::time::Duration;

use preemptql::http::HttpTransport;
use preemptql::server::{self, ServerConfig, ServerHandle};
use preemptql::wire::{RequestBody, ResponseBody};
use preemptql_core::client::{Client, ClientConfig, Request, ServerError, Transport, TransportError};
use preemptql_core::{parse, SolutionMapping, TripleStore};
use preemptql_oracle::gen::{dataset, Dialect, QueryGen};
use preemptql_oracle::{canonical, evaluate};

fn config(quantum_ms: Option<u64>) -> ServerConfig {
    ServerConfig { quantum: quantum_ms.map(Duration::from_millis), port: 0, ..ServerConfig::default() }
}

fn start(store: TripleStore, config: ServerConfig) -> ServerHandle {
    server::start(Arc::new(store), config).unwrap()
}

fn no_retry() -> ClientConfig {
    ClientConfig { max_retries: 0, ..ClientConfig::default() }
}

/// Posts a raw body and returns the status and text.
fn post_raw(endpoint: &str, body: &str) -> (u16, String) {
    let agent: ureq::Agent = ureq::Agent::config_builder().http_status_as_error(false).build().into();
    let mut resp = agent.post(endpoint).send(body).unwrap();
    (resp.status().as_u16(), resp.body_mut().read_to_string().unwrap())
}

fn drain(endpoint: &str, query: &str) -> (Vec<SolutionMapping>, usize) {
    let mut t = HttpTransport::new(&ClientConfig::default());
    let mut request = Request::Query(query.into());
    let mut rows = Vec::new();
    let mut pages = 0;
    loop {
        let page = t.post(endpoint, &request).unwrap();
        pages += 1;
        rows.extend(page.bindings);
        match page.plan {
            Some(p) => request = Request::Plan(p),
            None => return (rows, pages),
        }
    }
}

#[test]
fn pages_concatenate_to_the_oracle_result() {
    let data = dataset(3000, 4);
    let server = start(TripleStore::from_triples(data.clone()), ServerConfig { page_limit: 7, ..config(Some(1)) });
    let mut qg = QueryGen::new(&data, 9, Dialect::Server);
    let mut paged = 0;
    for _ in 0..25 {
        let q = qg.next_query();
        let (rows, pages) = drain(&server.endpoint(), &q);
        let expected = evaluate(&parse(&q).unwrap(), &data);
        assert_eq!(canonical(rows), canonical(expected), "{q}");
        paged += usize::from(pages > 1);
    }
    assert!(paged > 0);
    server.shutdown();
}

#[test]
fn responses_respect_the_page_limit_and_report_stats() {
    let data = dataset(2000, 1);
    let server = start(TripleStore::from_triples(data), ServerConfig { page_limit: 10, ..config(None) });
    let mut t = HttpTransport::new(&ClientConfig::default());
    let first = t.post(&server.endpoint(), &Request::Query("SELECT * WHERE { ?s ?p ?o }".into())).unwrap();
    assert_eq!(first.bindings.len(), 10);
    let plan = first.plan.clone().unwrap();
    assert_eq!(first.stats.plan_bytes, plan.len() as u64);
    assert!(first.stats.suspend_ns > 0);
    let second = t.post(&server.endpoint(), &Request::Plan(plan)).unwrap();
    assert_eq!(second.bindings.len(), 10);
    assert!(second.stats.resume_ns > 0);
    assert!(second.stats.quantum_seq > first.stats.quantum_seq);
    server.shutdown();
}

#[test]
fn single_page_query_is_complete_without_plan() {
    let server = start(canonical_store(), config(Some(75)));
    let body = serde_json::to_string(&RequestBody::from_request(&Request::Query(
        "SELECT ?s WHERE { ?s <http://example.org/knows> <http://example.org/alice> }".into(),
    )))
    .unwrap();
    let (status, text) = post_raw(&server.endpoint(), &body);
    assert_eq!(status, 200);
    let v: serde_json::Value = serde_json::from_str(&text).unwrap();
    assert_eq!(v["complete"], true);
    assert!(v.get("plan").is_none());
    for key in ["suspend_ns", "resume_ns", "plan_bytes", "quantum_used_ns"] {
        assert!(v["stats"][key].is_u64(), "{key}");
    }
    let (rows, _, _) = serde_json::from_str::<ResponseBody>(&text).unwrap().decode().unwrap();
    assert_eq!(rows.len(), 2);
    server.shutdown();
}

fn canonical_store() -> TripleStore {
    preemptql_oracle::canonical::store()
}

#[test]
fn client_operators_are_refused_by_name() {
    let server = start(canonical_store(), config(Some(75)));
    let mut t = HttpTransport::new(&no_retry());
    for (q, op) in [
        ("SELECT * WHERE { ?s ?p ?o } ORDER BY ?s", "OrderBy"),
        ("SELECT DISTINCT ?s WHERE { ?s ?p ?o }", "Distinct"),
        ("SELECT * WHERE { ?s ?p ?o OPTIONAL { ?o ?q ?r } }", "LeftJoin"),
    ] {
        match t.post(&server.endpoint(), &Request::Query(q.into())) {
            Err(TransportError::Server(ServerError::BadQuery(m))) => assert!(m.contains(op), "{m}"),
            other => panic!("{q}: {other:?}"),
        }
    }
    match t.post(&server.endpoint(), &Request::Query("SELECT WHERE".into())) {
        Err(TransportError::Server(ServerError::BadQuery(_))) => {}
        other => panic!("{other:?}"),
    }
    let (status, _) = post_raw(&server.endpoint(), "{\"nothing\": 1}");
    assert_eq!(status, 400);
    server.shutdown();
}

#[test]
fn plans_from_other_data_and_garbage_are_conflicts() {
    let a = start(canonical_store(), ServerConfig { page_limit: 1, ..config(None) });
    let b = start(TripleStore::from_triples(dataset(100, 3)), config(None));
    let mut t = HttpTransport::new(&no_retry());
    let page = t.post(&a.endpoint(), &Request::Query("SELECT * WHERE { ?s ?p ?o }".into())).unwrap();
    let plan = page.plan.unwrap();
    assert_eq!(t.post(&b.endpoint(), &Request::Plan(plan.clone())).unwrap_err(), TransportError::Server(ServerError::StalePlan));
    let mut cut = plan.clone();
    cut.truncate(plan.len() / 2);
    assert_eq!(t.post(&a.endpoint(), &Request::Plan(cut)).unwrap_err(), TransportError::Server(ServerError::StalePlan));
    a.shutdown();
    b.shutdown();
}

/// Slow enough to keep the only worker busy for a while.
const SLOW: &str = "SELECT * WHERE { ?a ?p ?b . ?c ?q ?d FILTER(?b = ?c && ?p = ?q && ?a != ?d) }";

fn slow_store() -> (Vec<preemptql_core::Triple>, TripleStore) {
    let data = dataset(700, 2);
    (data.clone(), TripleStore::from_triples(data))
}

#[test]
fn full_queue_overloads() {
    let (data, store) = slow_store();
    let server = start(
        store,
        ServerConfig { workers: 1, queue_capacity: 0, page_limit: usize::MAX, ..config(None) },
    );
    let endpoint = server.endpoint();
    let busy = {
        let endpoint = endpoint.clone();
        thread::spawn(move || HttpTransport::new(&no_retry()).post(&endpoint, &Request::Query(SLOW.into())).map(|p| p.bindings.len()))
    };
    thread::sleep(Duration::from_millis(150));
    let refused = HttpTransport::new(&no_retry()).post(&endpoint, &Request::Query("SELECT * WHERE { ?s ?p ?o }".into()));
    assert_eq!(refused.unwrap_err(), TransportError::Server(ServerError::Overloaded));
    let expected = data
        .iter()
        .flat_map(|x| data.iter().map(move |y| (x, y)))
        // comparing terms of different kinds is an error, which rejects the row
        .filter(|(x, y)| x.object == y.subject && x.predicate == y.predicate && x.subject.kind() == y.object.kind() && x.subject != y.object)
        .count();
    assert_eq!(busy.join().unwrap().unwrap(), expected);
    server.shutdown();
}

#[test]
fn overloaded_clients_back_off_and_succeed() {
    let data = dataset(1000, 2);
    let server = start(
        TripleStore::from_triples(data.clone()),
        ServerConfig { workers: 1, queue_capacity: 0, ..config(Some(2)) },
    );
    let endpoint = server.endpoint();
    let handles: Vec<_> = (0..4)
        .map(|_| {
            let endpoint = endpoint.clone();
            thread::spawn(move || {
                let config = ClientConfig { endpoint, max_retries: 20, ..ClientConfig::default() };
                Client::new(HttpTransport::new(&config), config).collect("SELECT * WHERE { ?s <http://example.org/knows> ?o }")
            })
        })
        .collect();
    let expected = evaluate(&parse("SELECT * WHERE { ?s <http://example.org/knows> ?o }").unwrap(), &data).len();
    for h in handles {
        assert_eq!(h.join().unwrap().unwrap().len(), expected);
    }
    server.shutdown();
}

#[test]
fn healthz_and_unknown_routes() {
    let server = start(canonical_store(), config(Some(75)));
    let agent: ureq::Agent = ureq::Agent::config_builder().http_status_as_error(false).build().into();
    let base = format!("http://{}", server.addr());
    assert_eq!(agent.get(&format!("{base}/healthz")).call().unwrap().status().as_u16(), 200);
    assert_eq!(agent.get(&format!("{base}/nope")).call().unwrap().status().as_u16(), 404);
    server.shutdown();
}

#[test]
fn shutdown_finishes_in_flight_quanta() {
    let (_, store) = slow_store();
    let server = start(store, ServerConfig { workers: 1, page_limit: usize::MAX, ..config(None) });
    let endpoint = server.endpoint();
    let busy = thread::spawn(move || HttpTransport::new(&no_retry()).post(&endpoint, &Request::Query(SLOW.into())).map(|p| p.complete));
    thread::sleep(Duration::from_millis(100));
    server.shutdown();
    assert_eq!(busy.join().unwrap(), Ok(true));
}

#[test]
fn taken_port_is_a_startup_error() {
    let taken = TcpListener::bind("127.0.0.1:0").unwrap();
    let port = taken.local_addr().unwrap().port();
    let err = server::start(Arc::new(canonical_store()), ServerConfig { port, ..ServerConfig::default() }).err().unwrap();
    assert!(err.to_string().contains("cannot bind"), "{err}");
    let bad = ServerConfig { workers: 0, port: 0, ..ServerConfig::default() };
    assert!(server::start(Arc::new(canonical_store()), bad).is_err());
}
