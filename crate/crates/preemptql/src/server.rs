//! Preemptive HTTP query service: one acceptor, a bounded FIFO queue and a
//! pool of workers that each run a job for one quantum.

use std::collections::VecDeque;
use std::io;
use std::net::{SocketAddr, TcpListener, ToSocketAddrs};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Condvar, Mutex};
use std::thread::{self, JoinHandle};
use std::time::{Duration, Instant};

use socket2::{Domain, Protocol, Socket, Type};
use tiny_http::{Header, Method, Response, StatusCode};

use preemptql_core::client::{load_request, PageStats, Request, ServerError};
use preemptql_core::engine::{Deadline, Unlimited};
use preemptql_core::{encode, TripleStore};

use crate::wire::{ErrorBody, RequestBody, ResponseBody};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ServerConfig {
    /// `None` runs every job to completion (FCFS).
    pub quantum: Option<Duration>,
    pub workers: usize,
    pub queue_capacity: usize,
    pub page_limit: usize,
    pub host: String,
    pub port: u16,
}

impl Default for ServerConfig {
    fn default() -> Self {
        ServerConfig {
            quantum: Some(Duration::from_millis(75)),
            workers: 4,
            queue_capacity: 100,
            page_limit: 2000,
            host: "127.0.0.1".into(),
            port: 8080,
        }
    }
}

impl ServerConfig {
    pub fn validate(&self) -> Result<(), String> {
        if self.quantum == Some(Duration::ZERO) {
            return Err("quantum must be positive".into());
        }
        if self.workers == 0 {
            return Err("workers must be at least 1".into());
        }
        if self.page_limit == 0 {
            return Err("page limit must be at least 1".into());
        }
        Ok(())
    }
}

struct Job {
    http: tiny_http::Request,
    request: Request,
    arrived: Instant,
}

#[derive(Default)]
struct Queue {
    jobs: VecDeque<Job>,
    idle: usize,
    closed: bool,
}

struct Shared {
    store: Arc<TripleStore>,
    config: ServerConfig,
    queue: Mutex<Queue>,
    ready: Condvar,
    seq: AtomicU64,
}

/// A running server. Dropping it without [`ServerHandle::shutdown`] leaves
/// the threads running until the process exits.
pub struct ServerHandle {
    addr: SocketAddr,
    shared: Arc<Shared>,
    threads: Vec<JoinHandle<()>>,
}

impl ServerHandle {
    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn endpoint(&self) -> String {
        format!("http://{}/sparql", self.addr)
    }

    /// Stops accepting, lets workers finish queued and in-flight quanta,
    /// then joins every thread.
    pub fn shutdown(self) {
        self.shared.queue.lock().unwrap().closed = true;
        self.shared.ready.notify_all();
        for t in self.threads {
            let _ = t.join();
        }
    }
}

pub fn start(store: Arc<TripleStore>, config: ServerConfig) -> io::Result<ServerHandle> {
    config.validate().map_err(|e| io::Error::new(io::ErrorKind::InvalidInput, e))?;
    let listener = bind(&config.host, config.port)
        .map_err(|e| io::Error::new(e.kind(), format!("cannot bind {}:{}: {e}", config.host, config.port)))?;
    let http = tiny_http::Server::from_listener(listener, None).map_err(io::Error::other)?;
    let addr = http.server_addr().to_ip().ok_or_else(|| io::Error::other("server is not on an IP socket"))?;
    let shared = Arc::new(Shared {
        store,
        queue: Mutex::new(Queue { idle: config.workers, ..Queue::default() }),
        config,
        ready: Condvar::new(),
        seq: AtomicU64::new(0),
    });
    let mut threads = Vec::new();
    for i in 0..shared.config.workers {
        let s = shared.clone();
        threads.push(thread::Builder::new().name(format!("worker-{i}")).spawn(move || worker(&s))?);
    }
    let s = shared.clone();
    threads.push(thread::Builder::new().name("acceptor".into()).spawn(move || acceptor(http, &s))?);
    log::info!("listening on {addr}");
    Ok(ServerHandle { addr, shared, threads })
}

/// A listener whose accepted sockets inherit TCP_NODELAY, so that a
/// response written in two parts is not held back waiting for an ACK.
fn bind(host: &str, port: u16) -> io::Result<TcpListener> {
    let addr = (host, port).to_socket_addrs()?.next().ok_or_else(|| io::Error::new(io::ErrorKind::InvalidInput, "no address"))?;
    let socket = Socket::new(Domain::for_address(addr), Type::STREAM, Some(Protocol::TCP))?;
    socket.set_nodelay(true)?;
    socket.bind(&addr.into())?;
    socket.listen(1024)?;
    Ok(socket.into())
}

fn json_response(status: u16, body: String) -> Response<io::Cursor<Vec<u8>>> {
    let header = Header::from_bytes("Content-Type", "application/json").unwrap();
    Response::from_data(body.into_bytes()).with_status_code(StatusCode(status)).with_header(header)
}

fn respond_error(http: tiny_http::Request, status: u16, message: String) {
    log::debug!("{status}: {message}");
    let body = serde_json::to_string(&ErrorBody { error: message }).unwrap();
    let _ = http.respond(json_response(status, body));
}

fn acceptor(http: tiny_http::Server, shared: &Shared) {
    loop {
        if shared.queue.lock().unwrap().closed {
            return;
        }
        let mut req = match http.recv_timeout(Duration::from_millis(50)) {
            Ok(Some(r)) => r,
            Ok(None) => continue,
            Err(e) => {
                log::warn!("accept failed: {e}");
                continue;
            }
        };
        let path = req.url().split('?').next().unwrap_or("").to_string();
        match (req.method(), path.as_str()) {
            (Method::Get, "/healthz") => {
                let _ = req.respond(Response::from_string("ok"));
            }
            (Method::Post, "/sparql") => {
                let mut text = String::new();
                if let Err(e) = req.as_reader().read_to_string(&mut text) {
                    respond_error(req, 400, format!("unreadable body: {e}"));
                    continue;
                }
                let request = match serde_json::from_str::<RequestBody>(&text) {
                    Ok(body) => body.into_request(),
                    Err(e) => Err(format!("malformed request body: {e}")),
                };
                match request {
                    Ok(request) => admit(shared, Job { http: req, request, arrived: Instant::now() }),
                    Err(m) => respond_error(req, 400, m),
                }
            }
            (_, "/sparql") | (_, "/healthz") => respond_error(req, 405, "method not allowed".into()),
            _ => respond_error(req, 404, format!("no route for {path}")),
        }
    }
}

/// A job is admitted while the queue holds fewer jobs than its capacity
/// plus the number of idle workers about to take one.
fn admit(shared: &Shared, job: Job) {
    let mut q = shared.queue.lock().unwrap();
    if q.closed || q.jobs.len() >= shared.config.queue_capacity + q.idle {
        drop(q);
        respond_error(job.http, 503, ServerError::Overloaded.to_string());
        return;
    }
    q.jobs.push_back(job);
    drop(q);
    shared.ready.notify_one();
}

fn worker(shared: &Shared) {
    loop {
        let job = {
            let mut q = shared.queue.lock().unwrap();
            loop {
                if let Some(job) = q.jobs.pop_front() {
                    q.idle -= 1;
                    break job;
                }
                if q.closed {
                    return;
                }
                q = shared.ready.wait(q).unwrap();
            }
        };
        log::trace!("job waited {:?}", job.arrived.elapsed());
        match run_quantum(shared, &job.request) {
            Ok(body) => {
                let _ = job.http.respond(json_response(200, body));
            }
            Err(e) => {
                let status = match e {
                    ServerError::BadQuery(_) => 400,
                    ServerError::StalePlan | ServerError::BadPlan(_) => 409,
                    ServerError::Overloaded => 503,
                };
                respond_error(job.http, status, e.to_string());
            }
        }
        shared.queue.lock().unwrap().idle += 1;
    }
}

/// Resumes (or builds) the plan, runs it for one quantum and suspends it.
/// Only the execute phase counts against the quantum.
fn run_quantum(shared: &Shared, request: &Request) -> Result<String, ServerError> {
    let store = &shared.store;
    let t0 = Instant::now();
    let mut plan = load_request(store, request)?;
    let resume_ns = t0.elapsed().as_nanos() as u64;

    let start = Instant::now();
    let quantum = shared.config.quantum;
    let mut timer = move || quantum.is_some_and(|q| start.elapsed() >= q);
    let deadline: &mut dyn Deadline = if quantum.is_some() { &mut timer } else { &mut Unlimited };
    let q = plan.execute_quantum(store, deadline, shared.config.page_limit);
    let quantum_used_ns = start.elapsed().as_nanos() as u64;
    let quantum_seq = shared.seq.fetch_add(1, Ordering::SeqCst) + 1;

    let t1 = Instant::now();
    let saved = (!q.complete).then(|| encode(&plan.save(store)));
    let suspend_ns = if saved.is_some() { t1.elapsed().as_nanos() as u64 } else { 0 };

    let stats = PageStats {
        suspend_ns,
        resume_ns,
        plan_bytes: saved.as_ref().map_or(0, |p| p.len() as u64),
        quantum_used_ns,
        quantum_seq,
    };
    let body = ResponseBody::new(&q.mappings, saved.as_deref(), stats);
    Ok(serde_json::to_string(&body).expect("response serializes"))
}
