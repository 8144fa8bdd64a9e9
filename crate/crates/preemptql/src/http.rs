//! HTTP transport for the smart client.

use std::thread;
use std::time::{Duration, Instant};

use ureq::Agent;

use preemptql_core::client::{Client, ClientConfig, ClientError, ClientStats, Page, PageStats, Request, ServerError, Transport, TransportError};
use preemptql_core::SolutionMapping;

use crate::wire::{ErrorBody, RequestBody, ResponseBody};

/// Base delay of the overload backoff; doubles on every retry.
const BACKOFF: Duration = Duration::from_millis(10);

pub struct HttpTransport {
    agent: Agent,
    max_retries: u32,
    /// Added before every request to emulate a slower network.
    pub latency: Duration,
    /// Every page received, in order.
    pub pages: Vec<PageRecord>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PageRecord {
    /// The request carried a saved plan.
    pub resumed: bool,
    pub stats: PageStats,
}

impl HttpTransport {
    pub fn new(config: &ClientConfig) -> Self {
        let agent = Agent::config_builder()
            .http_status_as_error(false)
            .timeout_global(Some(Duration::from_millis(config.timeout_ms)))
            .build()
            .into();
        HttpTransport { agent, max_retries: config.max_retries, latency: Duration::ZERO, pages: Vec::new() }
    }

    fn post_once(&mut self, url: &str, body: &str) -> Result<(u16, String), String> {
        if !self.latency.is_zero() {
            thread::sleep(self.latency);
        }
        let mut resp = self
            .agent
            .post(url)
            .header("Content-Type", "application/json")
            .send(body)
            .map_err(|e| e.to_string())?;
        let status = resp.status().as_u16();
        let text = resp.body_mut().with_config().limit(u64::MAX).read_to_string().map_err(|e| e.to_string())?;
        Ok((status, text))
    }
}

/// Appends `/sparql` to a bare server address.
pub fn sparql_url(endpoint: &str) -> String {
    let e = endpoint.trim_end_matches('/');
    if e.ends_with("/sparql") {
        e.to_string()
    } else {
        format!("{e}/sparql")
    }
}

fn error_message(text: &str) -> String {
    serde_json::from_str::<ErrorBody>(text).map(|e| e.error).unwrap_or_else(|_| text.to_string())
}

impl Transport for HttpTransport {
    fn post(&mut self, endpoint: &str, request: &Request) -> Result<Page, TransportError> {
        let url = sparql_url(endpoint);
        let body = serde_json::to_string(&RequestBody::from_request(request)).expect("request serializes");
        let mut attempt = 0;
        loop {
            let outcome = self.post_once(&url, &body);
            let retry = matches!(&outcome, Ok((503, _)) | Err(_));
            if retry && attempt < self.max_retries {
                let wait = BACKOFF * 2u32.pow(attempt.min(16));
                log::debug!("retrying {url} in {wait:?}");
                thread::sleep(wait);
                attempt += 1;
                continue;
            }
            let (status, text) = outcome.map_err(TransportError::Network)?;
            return match status {
                200 => {
                    let parsed: ResponseBody = serde_json::from_str(&text).map_err(|e| TransportError::Network(format!("bad response: {e}")))?;
                    let (bindings, plan, stats) = parsed.decode().map_err(TransportError::Network)?;
                    self.pages.push(PageRecord { resumed: matches!(request, Request::Plan(_)), stats });
                    Ok(Page {
                        complete: plan.is_none(),
                        bindings,
                        plan,
                        stats,
                        bytes_sent: body.len() as u64,
                        bytes_received: text.len() as u64,
                    })
                }
                400 => Err(TransportError::Server(ServerError::BadQuery(error_message(&text)))),
                409 => Err(TransportError::Server(ServerError::StalePlan)),
                503 => Err(TransportError::Server(ServerError::Overloaded)),
                other => Err(TransportError::Network(format!("HTTP {other}: {}", error_message(&text)))),
            };
        }
    }
}

/// Runs a query over HTTP, timing the first result and the whole run.
pub fn execute<T: Transport>(
    client: &mut Client<T>,
    query: &str,
    sink: &mut dyn FnMut(SolutionMapping),
) -> Result<ClientStats, ClientError> {
    let start = Instant::now();
    let mut first = None;
    let result = client.execute(query, &mut |m| {
        if first.is_none() {
            first = Some(start.elapsed().as_secs_f64() * 1e3);
        }
        sink(m)
    });
    client.stats.first_result_ms = first;
    client.stats.total_ms = start.elapsed().as_secs_f64() * 1e3;
    result.map(|()| client.stats)
}
