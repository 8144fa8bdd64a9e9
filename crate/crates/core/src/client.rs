//! Consumer side: resumes suspended plans against a server and evaluates
//! the operators that need whole collections of mappings.

use alloc::boxed::Box;
use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;

use crate::algebra::{classify, serialize_subquery, AggFunc, Aggregate, ClientPlan, CmpOp, FilterExpr, OrderKey, PlanNode};
use crate::codec;
use crate::engine::{build_plan, Deadline, EngineError, Plan};
use crate::expr;
use crate::parser::{parse, ParseError};
use crate::pattern::{PatternTerm, SolutionMapping, TriplePattern, Variable};
use crate::store::TripleStore;
use crate::term::{numeric_rank, Term};

/// Body of one request to a server.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Request {
    Query(String),
    Plan(Vec<u8>),
}

/// Server-side measurements attached to a page.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct PageStats {
    pub suspend_ns: u64,
    pub resume_ns: u64,
    pub plan_bytes: u64,
    pub quantum_used_ns: u64,
    /// Position of this quantum in the server's global execution order.
    pub quantum_seq: u64,
}

/// One server reply.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Page {
    pub bindings: Vec<SolutionMapping>,
    pub plan: Option<Vec<u8>>,
    pub complete: bool,
    pub stats: PageStats,
    pub bytes_sent: u64,
    pub bytes_received: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ServerError {
    /// Unparsable query or an operator outside the server fragment.
    BadQuery(String),
    /// Saved plan from another dataset.
    StalePlan,
    /// Saved plan that does not decode or load.
    BadPlan(String),
    /// Queue full; retry later.
    Overloaded,
}

impl fmt::Display for ServerError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ServerError::BadQuery(m) | ServerError::BadPlan(m) => f.write_str(m),
            ServerError::StalePlan => f.write_str("stale plan"),
            ServerError::Overloaded => f.write_str("server overloaded"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TransportError {
    Server(ServerError),
    /// Connection or protocol failure after retries.
    Network(String),
}

impl fmt::Display for TransportError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TransportError::Server(e) => e.fmt(f),
            TransportError::Network(m) => write!(f, "transport error: {m}"),
        }
    }
}

/// Sends one request to an endpoint.
pub trait Transport {
    fn post(&mut self, endpoint: &str, request: &Request) -> Result<Page, TransportError>;
}

/// Runs one quantum of a request against a store: the server's request
/// handler without timing or queueing.
pub fn serve_request(
    store: &TripleStore,
    request: &Request,
    deadline: &mut dyn Deadline,
    page_limit: usize,
) -> Result<(Vec<SolutionMapping>, Option<Vec<u8>>), ServerError> {
    let mut plan = load_request(store, request)?;
    let q = plan.execute_quantum(store, deadline, page_limit);
    let saved = (!q.complete).then(|| codec::encode(&plan.save(store)));
    Ok((q.mappings, saved))
}

/// Builds or resumes the plan named by a request.
pub fn load_request(store: &TripleStore, request: &Request) -> Result<Plan, ServerError> {
    match request {
        Request::Query(text) => {
            let node = parse(text).map_err(|e| ServerError::BadQuery(e.to_string()))?;
            let saved = build_plan(&node, store).map_err(|e| ServerError::BadQuery(e.to_string()))?;
            Plan::load(&saved, store).map_err(|e| ServerError::BadQuery(e.to_string()))
        }
        Request::Plan(bytes) => {
            let saved = codec::decode(bytes).map_err(|e| ServerError::BadPlan(e.to_string()))?;
            Plan::load(&saved, store).map_err(|e| match e {
                EngineError::StalePlan => ServerError::StalePlan,
                other => ServerError::BadPlan(other.to_string()),
            })
        }
    }
}

/// An in-process server endpoint.
pub struct LocalEndpoint<'a, D: FnMut() -> Box<dyn Deadline>> {
    pub store: &'a TripleStore,
    pub page_limit: usize,
    pub deadline: D,
    seq: u64,
}

impl<'a, D: FnMut() -> Box<dyn Deadline>> LocalEndpoint<'a, D> {
    pub fn new(store: &'a TripleStore, page_limit: usize, deadline: D) -> Self {
        LocalEndpoint { store, page_limit, deadline, seq: 0 }
    }
}

impl<D: FnMut() -> Box<dyn Deadline>> Transport for LocalEndpoint<'_, D> {
    fn post(&mut self, _endpoint: &str, request: &Request) -> Result<Page, TransportError> {
        let mut deadline = (self.deadline)();
        let (bindings, plan) =
            serve_request(self.store, request, deadline.as_mut(), self.page_limit).map_err(TransportError::Server)?;
        self.seq += 1;
        let plan_bytes = plan.as_ref().map_or(0, |p| p.len() as u64);
        let sent = match request {
            Request::Query(q) => q.len() as u64,
            Request::Plan(p) => p.len() as u64,
        };
        let received = plan_bytes + bindings.iter().map(|m| m.to_string().len() as u64).sum::<u64>();
        Ok(Page {
            complete: plan.is_none(),
            bindings,
            plan,
            stats: PageStats { plan_bytes, quantum_seq: self.seq, ..PageStats::default() },
            bytes_sent: sent,
            bytes_received: received,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum OptionalStrategy {
    Bind,
    Opt,
    #[default]
    Auto,
}

impl OptionalStrategy {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "bind" => Some(OptionalStrategy::Bind),
            "opt" => Some(OptionalStrategy::Opt),
            "auto" => Some(OptionalStrategy::Auto),
            _ => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            OptionalStrategy::Bind => "bind",
            OptionalStrategy::Opt => "opt",
            OptionalStrategy::Auto => "auto",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClientConfig {
    pub endpoint: String,
    pub bind_block_size: usize,
    pub optional_strategy: OptionalStrategy,
    pub max_retries: u32,
    pub timeout_ms: u64,
}

impl Default for ClientConfig {
    fn default() -> Self {
        ClientConfig {
            endpoint: String::new(),
            bind_block_size: 20,
            optional_strategy: OptionalStrategy::Auto,
            max_retries: 5,
            timeout_ms: 60_000,
        }
    }
}

/// Counters for one query execution.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct ClientStats {
    pub http_requests: u64,
    pub bytes_received: u64,
    pub bytes_sent: u64,
    /// Sum of `plan_bytes` over the pages that carried a plan.
    pub plan_bytes_received: u64,
    pub suspended_pages: u64,
    pub first_result_ms: Option<f64>,
    pub total_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ClientError {
    Parse(ParseError),
    /// The server refused a subquery the client believed evaluable.
    Fragment(String),
    Transport(TransportError),
    /// The plan went stale again after one restart.
    Stale,
}

impl fmt::Display for ClientError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ClientError::Parse(e) => e.fmt(f),
            ClientError::Fragment(m) => write!(f, "server rejected subquery: {m}"),
            ClientError::Transport(e) => e.fmt(f),
            ClientError::Stale => f.write_str("stale plan after restart"),
        }
    }
}

#[cfg(feature = "std")]
impl std::error::Error for ClientError {}

impl From<TransportError> for ClientError {
    fn from(e: TransportError) -> Self {
        ClientError::Transport(e)
    }
}

/// EXISTS patterns already drained, with their results.
type ExistsCache = Vec<(PlanNode, Vec<SolutionMapping>)>;
type Sink<'s> = &'s mut dyn FnMut(SolutionMapping);
type ClientResult<T> = core::result::Result<T, ClientError>;

/// Evaluates full queries by sending server-fragment subqueries.
pub struct Client<T: Transport> {
    pub transport: T,
    pub config: ClientConfig,
    pub stats: ClientStats,
}

impl<T: Transport> Client<T> {
    pub fn new(transport: T, config: ClientConfig) -> Self {
        Client { transport, config, stats: ClientStats::default() }
    }

    /// Parses and evaluates a query, pushing results into `sink` as they
    /// become available.
    pub fn execute(&mut self, query: &str, sink: Sink<'_>) -> ClientResult<()> {
        let node = parse(query).map_err(ClientError::Parse)?;
        self.execute_plan(&node, sink)
    }

    pub fn execute_plan(&mut self, node: &PlanNode, sink: Sink<'_>) -> ClientResult<()> {
        let plan = classify(node);
        self.eval(&plan, sink)
    }

    pub fn collect(&mut self, query: &str) -> ClientResult<Vec<SolutionMapping>> {
        let mut out = Vec::new();
        self.execute(query, &mut |m| out.push(m))?;
        Ok(out)
    }

    fn post(&mut self, endpoint: &str, request: &Request) -> Result<Page, TransportError> {
        self.stats.http_requests += 1;
        let page = self.transport.post(endpoint, request)?;
        self.stats.bytes_sent += page.bytes_sent;
        self.stats.bytes_received += page.bytes_received;
        if page.plan.is_some() {
            self.stats.suspended_pages += 1;
            self.stats.plan_bytes_received += page.stats.plan_bytes;
        }
        Ok(page)
    }

    /// Sends a server-fragment subquery and resubmits its saved plan until
    /// it completes. A stale plan restarts the subquery once.
    pub fn drain_subquery(&mut self, endpoint: &str, subquery: &PlanNode, sink: Sink<'_>) -> ClientResult<()> {
        let text = serialize_subquery(subquery).map_err(|e| ClientError::Fragment(e.to_string()))?;
        let mut restarted = false;
        let mut request = Request::Query(text.clone());
        loop {
            match self.post(endpoint, &request) {
                Ok(page) => {
                    for m in page.bindings {
                        sink(m);
                    }
                    match page.plan {
                        Some(plan) if !page.complete => request = Request::Plan(plan),
                        _ => return Ok(()),
                    }
                }
                Err(TransportError::Server(ServerError::StalePlan)) if !restarted => {
                    restarted = true;
                    request = Request::Query(text.clone());
                }
                Err(TransportError::Server(ServerError::StalePlan)) => return Err(ClientError::Stale),
                Err(TransportError::Server(ServerError::BadQuery(m))) => return Err(ClientError::Fragment(m)),
                Err(e) => return Err(e.into()),
            }
        }
    }

    fn drain_vec(&mut self, endpoint: &str, subquery: &PlanNode) -> ClientResult<Vec<SolutionMapping>> {
        let mut out = Vec::new();
        self.drain_subquery(endpoint, subquery, &mut |m| out.push(m))?;
        Ok(out)
    }

    fn eval_vec(&mut self, plan: &ClientPlan) -> ClientResult<Vec<SolutionMapping>> {
        let mut out = Vec::new();
        self.eval(plan, &mut |m| out.push(m))?;
        Ok(out)
    }

    fn eval(&mut self, plan: &ClientPlan, sink: Sink<'_>) -> ClientResult<()> {
        let endpoint = self.config.endpoint.clone();
        match plan {
            ClientPlan::Remote(p) => self.drain_subquery(&endpoint, p, sink),
            ClientPlan::Service { endpoint, pattern } => self.drain_subquery(endpoint, pattern, sink),
            ClientPlan::ServiceJoin { left, endpoint, pattern } => {
                let lefts = self.eval_vec(left)?;
                for block in lefts.chunks(self.config.bind_block_size.max(1)) {
                    for (mu, partners) in block.iter().zip(self.bind_block(endpoint, block, pattern)?) {
                        let _ = mu;
                        partners.into_iter().for_each(&mut *sink);
                    }
                }
                Ok(())
            }
            ClientPlan::Join(a, b) => {
                let right = self.eval_vec(b)?;
                let left = self.eval_vec(a)?;
                for l in &left {
                    for r in &right {
                        if l.compatible(r) {
                            sink(l.merge(r));
                        }
                    }
                }
                Ok(())
            }
            ClientPlan::Union(a, b) => {
                self.eval(a, sink)?;
                self.eval(b, sink)
            }
            ClientPlan::Filter(e, p) => {
                if e.is_pure() {
                    return self.eval(p, &mut |m| {
                        if expr::accepts(e, &m) {
                            sink(m)
                        }
                    });
                }
                let rows = self.eval_vec(p)?;
                let mut cache = ExistsCache::new();
                let mut failure = None;
                for m in rows {
                    let ok = expr::accepts_with(e, &m, &mut |pattern, mu| {
                        match self.exists(&endpoint, pattern, mu, &mut cache) {
                            Ok(b) => b,
                            Err(err) => {
                                failure.get_or_insert(err);
                                false
                            }
                        }
                    });
                    if let Some(err) = failure.take() {
                        return Err(err);
                    }
                    if ok {
                        sink(m);
                    }
                }
                Ok(())
            }
            ClientPlan::Project(vars, p) => self.eval(p, &mut |m| sink(m.project(vars))),
            ClientPlan::LeftJoin { left, right, cond } => self.left_join(left, right, cond.as_ref(), sink),
            ClientPlan::Distinct(p) => {
                let mut seen = BTreeSet::new();
                self.eval(p, &mut |m| {
                    if !seen.contains(&m) {
                        seen.insert(m.clone());
                        sink(m);
                    }
                })
            }
            ClientPlan::OrderBy(keys, p) => {
                let rows = self.eval_vec(p)?;
                order_by(rows, keys).into_iter().for_each(sink);
                Ok(())
            }
            ClientPlan::Group(keys, aggs, p) => {
                let rows = self.eval_vec(p)?;
                group_by(&rows, keys, aggs).into_iter().for_each(sink);
                Ok(())
            }
            ClientPlan::Minus(a, b) => {
                let right = self.eval_vec(b)?;
                self.eval(a, &mut |m| {
                    if !right.iter().any(|r| m.shares_variable(r) && m.compatible(r)) {
                        sink(m)
                    }
                })
            }
        }
    }

    fn exists(
        &mut self,
        endpoint: &str,
        pattern: &PlanNode,
        mu: &SolutionMapping,
        cache: &mut ExistsCache,
    ) -> ClientResult<bool> {
        if scoped_filters(pattern) {
            let slot = match cache.iter().position(|(p, _)| p == pattern) {
                Some(i) => i,
                None => {
                    let rows = self.drain_vec(endpoint, pattern)?;
                    cache.push((pattern.clone(), rows));
                    cache.len() - 1
                }
            };
            return Ok(cache[slot].1.iter().any(|r| r.compatible(mu)));
        }
        let bound = substitute_all(pattern, mu);
        let mut found = false;
        self.drain_subquery(endpoint, &bound, &mut |_| found = true)?;
        Ok(found)
    }

    fn left_join(
        &mut self,
        left: &ClientPlan,
        right: &ClientPlan,
        cond: Option<&FilterExpr>,
        sink: Sink<'_>,
    ) -> ClientResult<()> {
        let endpoint = self.config.endpoint.clone();
        if let (ClientPlan::Remote(p1), ClientPlan::Remote(p2)) = (left, right) {
            let opt_ok = opt_join_applicable(p1, p2);
            return match self.config.optional_strategy {
                OptionalStrategy::Opt | OptionalStrategy::Auto if opt_ok => self.opt_join(&endpoint, p1, p2, cond, sink),
                _ => self.bind_left_join(&endpoint, p1, p2, cond, sink),
            };
        }
        let rights = self.eval_vec(right)?;
        let lefts = self.eval_vec(left)?;
        let mut cache = ExistsCache::new();
        for l in lefts {
            let mut matched = false;
            for r in &rights {
                if !l.compatible(r) {
                    continue;
                }
                let merged = l.merge(r);
                if self.condition(&endpoint, cond, &merged, &mut cache)? {
                    matched = true;
                    sink(merged);
                }
            }
            if !matched {
                sink(l);
            }
        }
        Ok(())
    }

    fn condition(
        &mut self,
        endpoint: &str,
        cond: Option<&FilterExpr>,
        mu: &SolutionMapping,
        cache: &mut ExistsCache,
    ) -> ClientResult<bool> {
        let Some(e) = cond else { return Ok(true) };
        let mut failure = None;
        let ok = expr::accepts_with(e, mu, &mut |p, m| match self.exists(endpoint, p, m, cache) {
            Ok(b) => b,
            Err(err) => {
                failure.get_or_insert(err);
                false
            }
        });
        match failure {
            Some(err) => Err(err),
            None => Ok(ok),
        }
    }

    /// Left join sending blocks of bound copies of `p2` as one UNION query.
    pub fn bind_left_join(
        &mut self,
        endpoint: &str,
        p1: &PlanNode,
        p2: &PlanNode,
        cond: Option<&FilterExpr>,
        sink: Sink<'_>,
    ) -> ClientResult<()> {
        let lefts = self.drain_vec(endpoint, p1)?;
        let mut cache = ExistsCache::new();
        for block in lefts.chunks(self.config.bind_block_size.max(1)) {
            let partners = self.bind_block(endpoint, block, p2)?;
            for (mu, candidates) in block.iter().zip(partners) {
                let mut matched = false;
                for merged in candidates {
                    if self.condition(endpoint, cond, &merged, &mut cache)? {
                        matched = true;
                        sink(merged);
                    }
                }
                if !matched {
                    sink(mu.clone());
                }
            }
        }
        Ok(())
    }

    /// For each mapping of `block`, its joins with `p2`, in result order.
    fn bind_block(&mut self, endpoint: &str, block: &[SolutionMapping], p2: &PlanNode) -> ClientResult<Vec<Vec<SolutionMapping>>> {
        let mut out: Vec<Vec<SolutionMapping>> = block.iter().map(|_| Vec::new()).collect();
        if block.is_empty() {
            return Ok(out);
        }
        let p2_vars = p2.variables();
        if p2_vars.is_empty() {
            let n = self.drain_vec(endpoint, p2)?.len();
            for (mu, slot) in block.iter().zip(out.iter_mut()) {
                slot.extend(core::iter::repeat_n(mu.clone(), n));
            }
            return Ok(out);
        }
        let mut query: Option<PlanNode> = None;
        for (i, mu) in block.iter().enumerate() {
            let branch = rename(&bind_substitute(p2, &mu.project(&p2_vars)), i);
            query = Some(match query {
                Some(q) => PlanNode::union(q, branch),
                None => branch,
            });
        }
        let query = query.expect("block is not empty");
        let rows = self.drain_vec(endpoint, &query)?;
        for row in rows {
            let Some((i, partner)) = strip_branch(&row) else { continue };
            let Some(mu) = block.get(i) else { continue };
            if mu.compatible(&partner) {
                out[i].push(mu.merge(&partner));
            }
        }
        Ok(out)
    }

    /// Left join sending the single query `(p1 JOIN p2) UNION p1` and
    /// splitting its results by domain.
    pub fn opt_join(
        &mut self,
        endpoint: &str,
        p1: &PlanNode,
        p2: &PlanNode,
        cond: Option<&FilterExpr>,
        sink: Sink<'_>,
    ) -> ClientResult<()> {
        let v1 = p1.variables();
        let query = PlanNode::union(PlanNode::join(p1.clone(), p2.clone()), p1.clone());
        let rows = self.drain_vec(endpoint, &query)?;
        let mut lefts: Vec<(SolutionMapping, usize)> = Vec::new();
        let mut left_index: BTreeMap<SolutionMapping, usize> = BTreeMap::new();
        let mut joined: BTreeMap<SolutionMapping, Vec<SolutionMapping>> = BTreeMap::new();
        for row in rows {
            if row.domain().all(|v| v1.contains(v)) {
                match left_index.get(&row) {
                    Some(&i) => lefts[i].1 += 1,
                    None => {
                        left_index.insert(row.clone(), lefts.len());
                        lefts.push((row, 1));
                    }
                }
            } else {
                joined.entry(row.project(&v1)).or_default().push(row);
            }
        }
        // each left occurrence contributed one copy of its partners
        let mut cache = ExistsCache::new();
        for (mu, count) in lefts {
            let mut passing = Vec::new();
            if let Some(group) = joined.get(&mu) {
                for m in group {
                    if self.condition(endpoint, cond, m, &mut cache)? {
                        passing.push(m.clone());
                    }
                }
            }
            if passing.is_empty() {
                for _ in 0..count {
                    sink(mu.clone());
                }
            } else {
                passing.into_iter().for_each(&mut *sink);
            }
        }
        Ok(())
    }
}

/// Whether the domain test of the combined OPTIONAL query is sound: every
/// left mapping binds all of var(p1), every join mapping binds a variable
/// outside it, and the two sides share a variable.
pub fn opt_join_applicable(p1: &PlanNode, p2: &PlanNode) -> bool {
    let v1 = p1.variables();
    let c1 = p1.certain_variables();
    let v2 = p2.variables();
    let c2 = p2.certain_variables();
    v1.iter().any(|v| v2.contains(v)) && c2.iter().any(|v| !v1.contains(v)) && c1 == v1
}

/// True when every FILTER inside `p` only mentions variables its own
/// pattern always binds, so evaluating `p` once and matching by
/// compatibility equals substituting each outer mapping.
fn scoped_filters(p: &PlanNode) -> bool {
    match p {
        PlanNode::Filter(e, child) => {
            let mut vars = BTreeSet::new();
            e.variables(&mut vars);
            let certain = child.certain_variables();
            vars.iter().all(|v| certain.contains(v)) && scoped_filters(child)
        }
        other => other.children().into_iter().all(scoped_filters),
    }
}

/// Replaces every variable bound in `mu`, including inside filters.
pub fn substitute_all(p: &PlanNode, mu: &SolutionMapping) -> PlanNode {
    match p {
        PlanNode::Scan(tp) => PlanNode::Scan(tp.substitute(mu)),
        PlanNode::Join(a, b) => PlanNode::join(substitute_all(a, mu), substitute_all(b, mu)),
        PlanNode::Union(a, b) => PlanNode::union(substitute_all(a, mu), substitute_all(b, mu)),
        PlanNode::Filter(e, c) => PlanNode::filter(e.substitute(mu), substitute_all(c, mu)),
        other => other.clone(),
    }
}

/// Binds `p` with `mu` for a bind join. Filters keep variables their own
/// pattern might leave unbound, and a scan that would become fully ground
/// keeps one variable pinned by an equality filter so every result still
/// carries a binding.
pub fn bind_substitute(p: &PlanNode, mu: &SolutionMapping) -> PlanNode {
    match p {
        PlanNode::Scan(tp) => {
            let bound = tp.substitute(mu);
            if !bound.variables().is_empty() {
                return PlanNode::Scan(bound);
            }
            let Some(v) = tp.variables().first().map(|v| (*v).clone()) else {
                return PlanNode::Scan(bound);
            };
            let mut rest = mu.clone();
            let value = rest.remove(&v).expect("ground scan variable is bound");
            PlanNode::filter(
                FilterExpr::cmp(CmpOp::Eq, FilterExpr::Var(v), FilterExpr::Const(value)),
                PlanNode::Scan(tp.substitute(&rest)),
            )
        }
        PlanNode::Join(a, b) => PlanNode::join(bind_substitute(a, mu), bind_substitute(b, mu)),
        PlanNode::Union(a, b) => PlanNode::union(bind_substitute(a, mu), bind_substitute(b, mu)),
        PlanNode::Filter(e, c) => {
            let mut vars = BTreeSet::new();
            e.variables(&mut vars);
            let certain = c.certain_variables();
            let mut kept = mu.clone();
            for v in vars.iter().filter(|v| !certain.contains(v)) {
                kept.remove(v);
            }
            PlanNode::filter(e.substitute(&kept), bind_substitute(c, &kept))
        }
        other => other.clone(),
    }
}

const BRANCH_MARK: &str = "__b";

fn branch_var(v: &Variable, i: usize) -> Variable {
    Variable::new(format!("{}{BRANCH_MARK}{i}", v.name()))
}

/// Renames every variable of `p` with a branch suffix.
fn rename(p: &PlanNode, i: usize) -> PlanNode {
    let term = |t: &PatternTerm| match t {
        PatternTerm::Var(v) => PatternTerm::Var(branch_var(v, i)),
        other => other.clone(),
    };
    match p {
        PlanNode::Scan(tp) => PlanNode::Scan(TriplePattern { subject: term(&tp.subject), predicate: term(&tp.predicate), object: term(&tp.object) }),
        PlanNode::Join(a, b) => PlanNode::join(rename(a, i), rename(b, i)),
        PlanNode::Union(a, b) => PlanNode::union(rename(a, i), rename(b, i)),
        PlanNode::Filter(e, c) => PlanNode::filter(rename_expr(e, i), rename(c, i)),
        other => other.clone(),
    }
}

fn rename_expr(e: &FilterExpr, i: usize) -> FilterExpr {
    match e {
        FilterExpr::Var(v) => FilterExpr::Var(branch_var(v, i)),
        FilterExpr::Const(_) | FilterExpr::Exists(_) | FilterExpr::NotExists(_) => e.clone(),
        FilterExpr::Not(a) => FilterExpr::Not(Box::new(rename_expr(a, i))),
        FilterExpr::And(a, b) => FilterExpr::and(rename_expr(a, i), rename_expr(b, i)),
        FilterExpr::Or(a, b) => FilterExpr::or(rename_expr(a, i), rename_expr(b, i)),
        FilterExpr::Cmp(op, a, b) => FilterExpr::cmp(*op, rename_expr(a, i), rename_expr(b, i)),
    }
}

/// Recovers the branch index and original variable names of a bind-join row.
fn strip_branch(row: &SolutionMapping) -> Option<(usize, SolutionMapping)> {
    let mut branch = None;
    let mut out = SolutionMapping::new();
    for (v, t) in row.iter() {
        let (name, idx) = v.name().rsplit_once(BRANCH_MARK)?;
        let idx: usize = idx.parse().ok()?;
        if *branch.get_or_insert(idx) != idx {
            return None;
        }
        out.insert(Variable::new(name), t.clone());
    }
    branch.map(|b| (b, out))
}

/// Stable sort by the keys, each ascending or descending.
pub fn order_by(mut rows: Vec<SolutionMapping>, keys: &[OrderKey]) -> Vec<SolutionMapping> {
    rows.sort_by(|a, b| {
        for k in keys {
            let ord = expr::order_cmp(a.get(&k.var), b.get(&k.var));
            let ord = if k.descending { ord.reverse() } else { ord };
            if ord != core::cmp::Ordering::Equal {
                return ord;
            }
        }
        core::cmp::Ordering::Equal
    });
    rows
}

/// Groups rows by the key variables (unbound is its own key value) and
/// computes the aggregates. With no keys, an empty input still yields one
/// group. An aggregate whose input has a non-numeric value for SUM or AVG
/// leaves its output unbound.
pub fn group_by(rows: &[SolutionMapping], keys: &[Variable], aggs: &[Aggregate]) -> Vec<SolutionMapping> {
    let mut groups: BTreeMap<Vec<Option<Term>>, Vec<&SolutionMapping>> = BTreeMap::new();
    let mut order: Vec<Vec<Option<Term>>> = Vec::new();
    for r in rows {
        let key: Vec<Option<Term>> = keys.iter().map(|k| r.get(k).cloned()).collect();
        let entry = groups.entry(key.clone()).or_default();
        if entry.is_empty() {
            order.push(key);
        }
        entry.push(r);
    }
    if keys.is_empty() && groups.is_empty() {
        groups.insert(Vec::new(), Vec::new());
        order.push(Vec::new());
    }
    let mut out = Vec::with_capacity(order.len());
    for key in order {
        let members = &groups[&key];
        let mut mu = SolutionMapping::new();
        for (k, value) in keys.iter().zip(&key) {
            if let Some(t) = value {
                mu.insert(k.clone(), t.clone());
            }
        }
        for agg in aggs {
            if let Some(t) = aggregate(agg, members) {
                mu.insert(agg.output.clone(), t);
            }
        }
        out.push(mu);
    }
    out
}

fn aggregate(agg: &Aggregate, members: &[&SolutionMapping]) -> Option<Term> {
    let values: Vec<&Term> = match &agg.arg {
        None => return Some(Term::integer(members.len() as i64)),
        Some(v) => members.iter().filter_map(|m| m.get(v)).collect(),
    };
    match agg.func {
        AggFunc::Count => Some(Term::integer(values.len() as i64)),
        AggFunc::Sum | AggFunc::Avg => {
            let mut sum = 0.0;
            let mut rank = 0u8;
            for t in &values {
                sum += t.numeric_value()?;
                rank = rank.max(numeric_rank(t.datatype()?)?);
            }
            if agg.func == AggFunc::Sum {
                return Some(expr::numeric_term(sum, rank));
            }
            if values.is_empty() {
                return Some(Term::integer(0));
            }
            Some(expr::numeric_term(sum / values.len() as f64, rank.max(1)))
        }
        AggFunc::Min => values.into_iter().min_by(|a, b| expr::order_cmp(Some(a), Some(b))).cloned(),
        AggFunc::Max => values.into_iter().max_by(|a, b| expr::order_cmp(Some(a), Some(b))).cloned(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::{Always, Unlimited};
    use crate::term::{Triple, XSD_DECIMAL};
    use alloc::vec;

    fn fixture() -> TripleStore {
        let mut t = Vec::new();
        for i in 0..30 {
            let s = Term::iri(format!("http://ex/a{i}"));
            t.push(Triple::new(s.clone(), Term::iri("http://ex/name"), Term::literal(format!("n{i}"))));
            if i % 3 == 0 {
                t.push(Triple::new(s.clone(), Term::iri("http://ex/born"), Term::iri(format!("http://ex/c{}", i % 4))));
            }
            t.push(Triple::new(s, Term::iri("http://ex/age"), Term::integer(i % 7)));
        }
        TripleStore::from_triples(t)
    }

    fn client(store: &TripleStore, strategy: OptionalStrategy, always: bool) -> Client<impl Transport + '_> {
        let endpoint = LocalEndpoint::new(store, 1000, move || -> Box<dyn Deadline> {
            if always {
                Box::new(Always)
            } else {
                Box::new(Unlimited)
            }
        });
        Client::new(endpoint, ClientConfig { optional_strategy: strategy, bind_block_size: 4, ..ClientConfig::default() })
    }

    fn sorted(mut v: Vec<SolutionMapping>) -> Vec<SolutionMapping> {
        v.sort();
        v
    }

    #[test]
    fn optional_strategies_agree() {
        let st = fixture();
        let q = "SELECT * WHERE { ?a <http://ex/name> ?n OPTIONAL { ?a <http://ex/born> ?c } }";
        let bind = sorted(client(&st, OptionalStrategy::Bind, false).collect(q).unwrap());
        let mut c = client(&st, OptionalStrategy::Opt, false);
        let opt = sorted(c.collect(q).unwrap());
        assert_eq!(bind, opt);
        assert_eq!(bind.len(), 30);
        assert_eq!(bind.iter().filter(|m| m.contains(&Variable::new("c"))).count(), 10);
        assert_eq!(c.stats.http_requests, 1);
    }

    #[test]
    fn requests_equal_quanta_for_bgp() {
        let st = fixture();
        let mut c = client(&st, OptionalStrategy::Auto, true);
        let rows = c.collect("SELECT * WHERE { ?a <http://ex/born> ?c . ?a <http://ex/age> ?x }").unwrap();
        assert_eq!(rows.len(), 10);
        assert_eq!(c.stats.http_requests, c.stats.suspended_pages + 1);
    }

    #[test]
    fn ground_branches_keep_a_variable() {
        let tp = TriplePattern::new(PatternTerm::var("a"), Term::iri("p"), PatternTerm::var("b"));
        let mu: SolutionMapping = [(Variable::new("a"), Term::iri("x")), (Variable::new("b"), Term::iri("y"))].into_iter().collect();
        let bound = bind_substitute(&PlanNode::Scan(tp), &mu);
        assert!(matches!(bound, PlanNode::Filter(..)));
        assert_eq!(bound.variables().len(), 1);
    }

    #[test]
    fn aggregates() {
        let rows: Vec<SolutionMapping> = [2, 4]
            .iter()
            .map(|v| [(Variable::new("x"), Term::integer(*v))].into_iter().collect())
            .collect();
        let aggs = vec![
            Aggregate { func: AggFunc::Avg, arg: Some(Variable::new("x")), output: Variable::new("avg") },
            Aggregate { func: AggFunc::Sum, arg: Some(Variable::new("x")), output: Variable::new("sum") },
            Aggregate { func: AggFunc::Min, arg: Some(Variable::new("x")), output: Variable::new("min") },
            Aggregate { func: AggFunc::Count, arg: None, output: Variable::new("n") },
        ];
        let out = group_by(&rows, &[], &aggs);
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].get_named("avg"), Some(&Term::typed_literal("3.0", XSD_DECIMAL)));
        assert_eq!(out[0].get_named("sum"), Some(&Term::integer(6)));
        assert_eq!(out[0].get_named("min"), Some(&Term::integer(2)));
        assert_eq!(out[0].get_named("n"), Some(&Term::integer(2)));
        let mixed = vec![rows[0].clone(), [(Variable::new("x"), Term::iri("z"))].into_iter().collect()];
        let out = group_by(&mixed, &[], &aggs[1..2]);
        assert!(out[0].get_named("sum").is_none());
    }

    #[test]
    fn minus_and_exists() {
        let st = fixture();
        let mut c = client(&st, OptionalStrategy::Auto, false);
        let minus = c.collect("SELECT ?a WHERE { ?a <http://ex/name> ?n MINUS { ?a <http://ex/born> ?c } }").unwrap();
        assert_eq!(minus.len(), 20);
        let exists = c
            .collect("SELECT ?a WHERE { ?a <http://ex/name> ?n FILTER EXISTS { ?a <http://ex/born> ?c FILTER(?c != ?n) } }")
            .unwrap();
        assert_eq!(exists.len(), 0);
        let exists = c.collect("SELECT ?a WHERE { ?a <http://ex/name> ?n FILTER EXISTS { ?a <http://ex/born> ?c } }").unwrap();
        assert_eq!(exists.len(), 10);
    }
}
