//! Preemptable physical operators.
//!
//! A plan is a tree of pull operators. Every operator can describe its state
//! as a [`SavedOp`], and a fresh plan is just the load of a saved tree whose
//! scans sit at their start positions, so building and resuming share one
//! code path.
//!
//! Operators under the inner side of an index loop join are *seeded* with the
//! mapping pulled from the outer side: a seeded scan substitutes the seed into
//! its pattern, but every operator still outputs exactly the mappings it would
//! output unseeded, restricted to those compatible with the seed.

use alloc::boxed::Box;
use alloc::collections::BTreeSet;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;

use crate::algebra::{FilterExpr, PlanNode};
use crate::expr;
use crate::pattern::{PatternTerm, SolutionMapping, TriplePattern, Variable};
use crate::store::{select_index_for, Cursor, ScanPosition, TermId, TripleStore};

/// Decides when a quantum is over. Checked only at consistent points.
pub trait Deadline {
    fn expired(&mut self) -> bool;
}

/// Never expires.
pub struct Unlimited;

impl Deadline for Unlimited {
    fn expired(&mut self) -> bool {
        false
    }
}

/// Expires at every check: forces a suspension at each yield point.
pub struct Always;

impl Deadline for Always {
    fn expired(&mut self) -> bool {
        true
    }
}

/// Expires at the `n`-th check and every check after it.
pub struct AfterChecks {
    remaining: u64,
}

impl AfterChecks {
    pub fn new(n: u64) -> Self {
        AfterChecks { remaining: n }
    }
}

impl Deadline for AfterChecks {
    fn expired(&mut self) -> bool {
        if self.remaining <= 1 {
            self.remaining = 0;
            return true;
        }
        self.remaining -= 1;
        false
    }
}

impl<F: FnMut() -> bool> Deadline for F {
    fn expired(&mut self) -> bool {
        self()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum EngineError {
    /// The subquery contains an operator the server does not evaluate.
    Unsupported(String),
    /// The saved plan was produced against a different dataset.
    StalePlan,
    /// The saved plan is well-formed on the wire but not a reachable state.
    CorruptPlan(String),
}

impl fmt::Display for EngineError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EngineError::Unsupported(op) => write!(f, "operator {op} is not evaluable by the server"),
            EngineError::StalePlan => f.write_str("stale plan"),
            EngineError::CorruptPlan(why) => write!(f, "corrupt plan: {why}"),
        }
    }
}

#[cfg(feature = "std")]
impl std::error::Error for EngineError {}

/// How a join records the mapping it is currently extending.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum OuterState {
    /// No mapping in progress; the next pull goes to the outer input.
    None,
    /// Same as the last mapping the outer input produced, which is
    /// recoverable from the outer input's own saved state.
    Inherit,
    Explicit(SolutionMapping),
}

#[allow(clippy::large_enum_variant)]
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum SavedOp {
    Projection { vars: Vec<Variable>, child: Box<SavedOp> },
    IndexScan { pattern: TriplePattern, position: ScanPosition },
    IndexLoopJoin { current: OuterState, outer: Box<SavedOp>, inner: Box<SavedOp> },
    MergeJoin { var: Variable, current: OuterState, left: Box<SavedOp>, right: Box<SavedOp> },
    Union { active: u32, children: Vec<SavedOp> },
    Filter { expr: FilterExpr, child: Box<SavedOp> },
}

impl SavedOp {
    pub fn name(&self) -> &'static str {
        match self {
            SavedOp::Projection { .. } => "Projection",
            SavedOp::IndexScan { .. } => "IndexScan",
            SavedOp::IndexLoopJoin { .. } => "IndexLoopJoin",
            SavedOp::MergeJoin { .. } => "MergeJoin",
            SavedOp::Union { .. } => "Union",
            SavedOp::Filter { .. } => "Filter",
        }
    }

    pub fn children(&self) -> Vec<&SavedOp> {
        match self {
            SavedOp::IndexScan { .. } => Vec::new(),
            SavedOp::Projection { child, .. } | SavedOp::Filter { child, .. } => alloc::vec![child],
            SavedOp::IndexLoopJoin { outer, inner, .. } => alloc::vec![outer, inner],
            SavedOp::MergeJoin { left, right, .. } => alloc::vec![left, right],
            SavedOp::Union { children, .. } => children.iter().collect(),
        }
    }

    /// Number of operators.
    pub fn size(&self) -> usize {
        1 + self.children().iter().map(|c| c.size()).sum::<usize>()
    }

    /// Number of join operators.
    pub fn joins(&self) -> usize {
        let own = matches!(self, SavedOp::IndexLoopJoin { .. } | SavedOp::MergeJoin { .. }) as usize;
        own + self.children().iter().map(|c| c.joins()).sum::<usize>()
    }

    /// The same operator tree with every scan back at its start.
    pub fn reset(&self) -> SavedOp {
        match self {
            SavedOp::Projection { vars, child } => SavedOp::Projection { vars: vars.clone(), child: Box::new(child.reset()) },
            SavedOp::IndexScan { pattern, .. } => SavedOp::IndexScan { pattern: pattern.clone(), position: start_of(pattern) },
            SavedOp::IndexLoopJoin { outer, inner, .. } => SavedOp::IndexLoopJoin {
                current: OuterState::None,
                outer: Box::new(outer.reset()),
                inner: Box::new(inner.reset()),
            },
            SavedOp::MergeJoin { var, left, right, .. } => SavedOp::MergeJoin {
                var: var.clone(),
                current: OuterState::None,
                left: Box::new(left.reset()),
                right: Box::new(right.reset()),
            },
            SavedOp::Union { children, .. } => SavedOp::Union { active: 0, children: children.iter().map(SavedOp::reset).collect() },
            SavedOp::Filter { expr, child } => SavedOp::Filter { expr: expr.clone(), child: Box::new(child.reset()) },
        }
    }

    /// One operator per line, children indented.
    pub fn pretty(&self) -> String {
        let mut out = String::new();
        self.pretty_into(0, &mut out);
        out
    }

    fn pretty_into(&self, depth: usize, out: &mut String) {
        use core::fmt::Write;
        for _ in 0..depth {
            out.push_str("  ");
        }
        let _ = match self {
            SavedOp::Projection { vars, .. } => {
                let names: Vec<String> = vars.iter().map(|v| v.to_string()).collect();
                writeln!(out, "Projection {}", names.join(" "))
            }
            SavedOp::IndexScan { pattern, position } => match &position.last {
                Some(t) => writeln!(out, "IndexScan {pattern} [{} after {t}]", position.index),
                None => writeln!(out, "IndexScan {pattern} [{}]", position.index),
            },
            SavedOp::IndexLoopJoin { current, .. } => writeln!(out, "IndexLoopJoin{}", outer_label(current)),
            SavedOp::MergeJoin { var, current, .. } => writeln!(out, "MergeJoin on {var}{}", outer_label(current)),
            SavedOp::Union { active, .. } => writeln!(out, "Union active={active}"),
            SavedOp::Filter { expr, .. } => writeln!(out, "Filter {expr}"),
        };
        for c in self.children() {
            c.pretty_into(depth + 1, out);
        }
    }
}

fn outer_label(current: &OuterState) -> String {
    match current {
        OuterState::None => String::new(),
        OuterState::Inherit => " current=<outer's last>".into(),
        OuterState::Explicit(m) => alloc::format!(" current={m}"),
    }
}

fn start_of(pattern: &TriplePattern) -> ScanPosition {
    ScanPosition::start(select_index_for(pattern))
}

/// A plan passed by value between quanta.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct SavedPlan {
    pub fingerprint: u64,
    pub root: SavedOp,
}

/// Work counters for suspend and resume.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Stats {
    /// Operators visited.
    pub visits: u64,
    /// Index key comparisons made while relocating scans.
    pub comparisons: u64,
}

/// Orders join factors and chooses physical operators.
pub fn build_plan(node: &PlanNode, store: &TripleStore) -> Result<SavedPlan, EngineError> {
    if let Some(client) = node.first_client_node() {
        return Err(EngineError::Unsupported(client.name().to_string()));
    }
    let root = match node {
        PlanNode::Project(vars, child) => {
            SavedOp::Projection { vars: vars.clone(), child: Box::new(build_op(child, store, false)?) }
        }
        other => build_op(other, store, false)?,
    };
    Ok(SavedPlan { fingerprint: store.fingerprint(), root })
}

fn build_op(node: &PlanNode, store: &TripleStore, seeded: bool) -> Result<SavedOp, EngineError> {
    match node {
        PlanNode::Scan(tp) => Ok(SavedOp::IndexScan { pattern: tp.clone(), position: start_of(tp) }),
        PlanNode::Filter(e, child) => {
            Ok(SavedOp::Filter { expr: e.clone(), child: Box::new(build_op(child, store, seeded)?) })
        }
        PlanNode::Union(..) => {
            let mut branches = Vec::new();
            flatten_union(node, &mut branches);
            let children = branches.into_iter().map(|b| build_op(b, store, seeded)).collect::<Result<_, _>>()?;
            Ok(SavedOp::Union { active: 0, children })
        }
        PlanNode::Join(..) => {
            let mut factors = Vec::new();
            flatten_join(node, &mut factors);
            let ordered = order_factors(factors, store);
            if !seeded && ordered.len() == 2 {
                if let (PlanNode::Scan(a), PlanNode::Scan(b)) = (ordered[0], ordered[1]) {
                    if let Some(var) = merge_variable(a, b) {
                        return Ok(SavedOp::MergeJoin {
                            var,
                            current: OuterState::None,
                            left: Box::new(build_op(ordered[0], store, false)?),
                            right: Box::new(build_op(ordered[1], store, false)?),
                        });
                    }
                }
            }
            let mut iter = ordered.into_iter();
            let first = iter.next().expect("a join has two factors");
            let mut acc = build_op(first, store, seeded)?;
            for f in iter {
                acc = SavedOp::IndexLoopJoin {
                    current: OuterState::None,
                    outer: Box::new(acc),
                    inner: Box::new(build_op(f, store, true)?),
                };
            }
            Ok(acc)
        }
        PlanNode::Project(..) => Err(EngineError::Unsupported("nested Project".into())),
        other => Err(EngineError::Unsupported(other.name().into())),
    }
}

fn flatten_union<'a>(node: &'a PlanNode, out: &mut Vec<&'a PlanNode>) {
    match node {
        PlanNode::Union(a, b) => {
            flatten_union(a, out);
            flatten_union(b, out);
        }
        other => out.push(other),
    }
}

fn flatten_join<'a>(node: &'a PlanNode, out: &mut Vec<&'a PlanNode>) {
    match node {
        PlanNode::Join(a, b) => {
            flatten_join(a, out);
            flatten_join(b, out);
        }
        other => out.push(other),
    }
}

/// Number of triples matching the constants of a subtree (upper bound for
/// anything other than a scan).
pub fn estimate(node: &PlanNode, store: &TripleStore) -> usize {
    match node {
        PlanNode::Scan(tp) => store.estimate(&store.encode_pattern(tp)),
        PlanNode::Union(a, b) => estimate(a, store).saturating_add(estimate(b, store)),
        PlanNode::Join(a, b) => estimate(a, store).min(estimate(b, store)),
        other => other.children().first().map_or(0, |c| estimate(c, store)),
    }
}

/// Ascending estimated cardinality, preferring factors connected to the
/// variables already bound. Ties keep syntactic order.
fn order_factors<'a>(factors: Vec<&'a PlanNode>, store: &TripleStore) -> Vec<&'a PlanNode> {
    let mut pending: Vec<(usize, &PlanNode, BTreeSet<Variable>)> =
        factors.into_iter().map(|f| (estimate(f, store), f, f.variables())).collect();
    let mut bound: BTreeSet<Variable> = BTreeSet::new();
    let mut out = Vec::with_capacity(pending.len());
    while !pending.is_empty() {
        let connected = |vars: &BTreeSet<Variable>| !bound.is_empty() && vars.iter().any(|v| bound.contains(v));
        let pick = pending
            .iter()
            .enumerate()
            .filter(|(_, f)| out.is_empty() || connected(&f.2))
            .min_by_key(|(i, f)| (f.0, *i))
            .or_else(|| pending.iter().enumerate().min_by_key(|(i, f)| (f.0, *i)))
            .map(|(i, _)| i)
            .expect("pending is not empty");
        let (_, node, vars) = pending.remove(pick);
        bound.extend(vars);
        out.push(node);
    }
    out
}

/// The variable on which both scans are sorted, if any.
fn merge_variable(a: &TriplePattern, b: &TriplePattern) -> Option<Variable> {
    let leading = |tp: &TriplePattern| {
        let slots = tp.positions();
        select_index_for(tp).order().into_iter().find_map(|pos| slots[pos].as_var()).cloned()
    };
    let (va, vb) = (leading(a)?, leading(b)?);
    (va == vb).then_some(va)
}

/// Outcome of one pull.
enum Step {
    Item(SolutionMapping),
    Done,
    Paused,
}

struct Ctx<'a> {
    store: &'a TripleStore,
    deadline: &'a mut dyn Deadline,
}

impl Ctx<'_> {
    fn expired(&mut self) -> bool {
        self.deadline.expired()
    }
}

struct ScanOp {
    pattern: TriplePattern,
    cursor: Cursor,
}

impl ScanOp {
    fn load(
        pattern: &TriplePattern,
        position: &ScanPosition,
        seed: &SolutionMapping,
        store: &TripleStore,
        stats: &mut Stats,
    ) -> Result<ScanOp, EngineError> {
        let encoded = store.encode_pattern(&pattern.substitute(seed));
        let cursor = match &position.last {
            None => store.open(encoded),
            Some(t) => {
                if position.index != encoded.index() {
                    return Err(EngineError::CorruptPlan("scan position uses the wrong index".into()));
                }
                let key = store.encode_triple(t).ok_or_else(stale_position)?;
                store.reopen(encoded, Some(key), &mut stats.comparisons).map_err(|_| stale_position())?
            }
        };
        Ok(ScanOp { pattern: pattern.clone(), cursor })
    }

    fn save(&self, store: &TripleStore) -> SavedOp {
        let mut position = store.position(&self.cursor);
        if position.last.is_none() {
            position = start_of(&self.pattern);
        }
        SavedOp::IndexScan { pattern: self.pattern.clone(), position }
    }

    fn bind(&self, spo: [TermId; 3], store: &TripleStore) -> SolutionMapping {
        let mut mu = SolutionMapping::new();
        for (slot, id) in self.pattern.positions().into_iter().zip(spo) {
            if let PatternTerm::Var(v) = slot {
                mu.insert(v.clone(), store.term(id).clone());
            }
        }
        mu
    }

    fn next(&mut self, store: &TripleStore) -> Step {
        match store.next(&mut self.cursor) {
            Some(spo) => Step::Item(self.bind(spo, store)),
            None => Step::Done,
        }
    }

    fn last(&self, store: &TripleStore) -> Option<SolutionMapping> {
        let key = store.last_key(&self.cursor)?;
        self.cursor.pattern().accepts(&key).then(|| self.bind(key, store))
    }
}

fn stale_position() -> EngineError {
    EngineError::CorruptPlan("scan position is not in the index".into())
}

struct IljOp {
    seed: SolutionMapping,
    current: Option<SolutionMapping>,
    outer: Op,
    inner: Option<Op>,
    template: SavedOp,
}

struct MergeOp {
    var: Variable,
    /// Position of the join variable in the right pattern.
    right_slot: usize,
    current: Option<(SolutionMapping, TermId)>,
    left: ScanOp,
    right: ScanOp,
}

impl MergeOp {
    fn last(&self, store: &TripleStore) -> Option<SolutionMapping> {
        let (mu, id) = self.current.as_ref()?;
        let key = store.last_key(&self.right.cursor)?;
        if key[self.right_slot] != *id || !self.right.cursor.pattern().accepts(&key) {
            return None;
        }
        let r = self.right.bind(key, store);
        mu.compatible(&r).then(|| mu.merge(&r))
    }
}

enum Op {
    Projection { vars: Vec<Variable>, child: Box<Op> },
    Scan(Box<ScanOp>),
    Ilj(Box<IljOp>),
    Merge(Box<MergeOp>),
    Union { active: usize, children: Vec<Op> },
    Filter { expr: FilterExpr, child: Box<Op> },
}

impl Op {
    fn load(saved: &SavedOp, seed: &SolutionMapping, store: &TripleStore, stats: &mut Stats) -> Result<Op, EngineError> {
        stats.visits += 1;
        Ok(match saved {
            SavedOp::Projection { vars, child } => {
                Op::Projection { vars: vars.clone(), child: Box::new(Op::load(child, seed, store, stats)?) }
            }
            SavedOp::IndexScan { pattern, position } => Op::Scan(Box::new(ScanOp::load(pattern, position, seed, store, stats)?)),
            SavedOp::IndexLoopJoin { current, outer, inner } => {
                let outer = Op::load(outer, seed, store, stats)?;
                let current = resolve_outer(current, || outer.last(store))?;
                let template = inner.reset();
                let inner = match &current {
                    Some(mu) => Some(Op::load(inner, &seed.merge(mu), store, stats)?),
                    None => None,
                };
                Op::Ilj(Box::new(IljOp { seed: seed.clone(), current, outer, inner, template }))
            }
            SavedOp::MergeJoin { var, current, left, right } => {
                let scan = |s: &SavedOp, stats: &mut Stats| match s {
                    SavedOp::IndexScan { pattern, position } => {
                        stats.visits += 1;
                        ScanOp::load(pattern, position, seed, store, stats)
                    }
                    _ => Err(EngineError::CorruptPlan("merge join input is not a scan".into())),
                };
                let left = scan(left, stats)?;
                let right = scan(right, stats)?;
                let right_slot = right
                    .pattern
                    .positions()
                    .iter()
                    .position(|p| p.as_var() == Some(var))
                    .ok_or_else(|| EngineError::CorruptPlan("merge variable missing from input".into()))?;
                let current = resolve_outer(current, || left.last(store))?;
                let current = match current {
                    Some(mu) => {
                        let id = mu
                            .get(var)
                            .and_then(|t| store.term_id(t))
                            .ok_or_else(|| EngineError::CorruptPlan("merge key not in dataset".into()))?;
                        Some((mu, id))
                    }
                    None => None,
                };
                Op::Merge(Box::new(MergeOp { var: var.clone(), right_slot, current, left, right }))
            }
            SavedOp::Union { active, children } => {
                if *active as usize > children.len() {
                    return Err(EngineError::CorruptPlan("union branch out of range".into()));
                }
                let children = children.iter().map(|c| Op::load(c, seed, store, stats)).collect::<Result<_, _>>()?;
                Op::Union { active: *active as usize, children }
            }
            SavedOp::Filter { expr, child } => {
                if !expr.is_pure() {
                    return Err(EngineError::Unsupported("Filter with EXISTS".into()));
                }
                Op::Filter { expr: expr.clone(), child: Box::new(Op::load(child, seed, store, stats)?) }
            }
        })
    }

    fn save(&self, store: &TripleStore, stats: &mut Stats) -> SavedOp {
        stats.visits += 1;
        match self {
            Op::Projection { vars, child } => SavedOp::Projection { vars: vars.clone(), child: Box::new(child.save(store, stats)) },
            Op::Scan(s) => s.save(store),
            Op::Ilj(j) => {
                let outer = Box::new(j.outer.save(store, stats));
                let (current, inner) = match (&j.current, &j.inner) {
                    (Some(mu), Some(inner)) => {
                        (describe_outer(mu, j.outer.last(store)), inner.save(store, stats))
                    }
                    _ => (OuterState::None, j.template.clone()),
                };
                SavedOp::IndexLoopJoin { current, outer, inner: Box::new(inner) }
            }
            Op::Merge(m) => {
                stats.visits += 2;
                let current = match &m.current {
                    Some((mu, _)) => describe_outer(mu, m.left.last(store)),
                    None => OuterState::None,
                };
                SavedOp::MergeJoin {
                    var: m.var.clone(),
                    current,
                    left: Box::new(m.left.save(store)),
                    right: Box::new(m.right.save(store)),
                }
            }
            Op::Union { active, children } => SavedOp::Union {
                active: *active as u32,
                children: children.iter().map(|c| c.save(store, stats)).collect(),
            },
            Op::Filter { expr, child } => SavedOp::Filter { expr: expr.clone(), child: Box::new(child.save(store, stats)) },
        }
    }

    /// The last mapping this operator produced, when its state still shows it.
    fn last(&self, store: &TripleStore) -> Option<SolutionMapping> {
        match self {
            Op::Projection { vars, child } => child.last(store).map(|m| m.project(vars)),
            Op::Scan(s) => s.last(store),
            Op::Ilj(j) => {
                let mu = j.current.as_ref()?;
                let inner = j.inner.as_ref()?.last(store)?;
                Some(mu.merge(&inner))
            }
            Op::Merge(m) => m.last(store),
            Op::Union { active, children } => children.get(*active)?.last(store),
            Op::Filter { expr, child } => child.last(store).filter(|m| expr::accepts(expr, m)),
        }
    }

    fn next(&mut self, ctx: &mut Ctx<'_>) -> Step {
        match self {
            Op::Projection { vars, child } => match child.next(ctx) {
                Step::Item(m) => Step::Item(m.project(vars.iter())),
                other => other,
            },
            Op::Scan(s) => s.next(ctx.store),
            Op::Ilj(j) => loop {
                if j.current.is_none() {
                    match j.outer.next(ctx) {
                        Step::Item(mu) => {
                            let seed = j.seed.merge(&mu);
                            let inner = Op::load(&j.template, &seed, ctx.store, &mut Stats::default())
                                .expect("a reset template always loads");
                            j.inner = Some(inner);
                            j.current = Some(mu);
                            if ctx.expired() {
                                return Step::Paused;
                            }
                        }
                        other => return other,
                    }
                }
                let inner = j.inner.as_mut().expect("inner exists while a mapping is current");
                match inner.next(ctx) {
                    Step::Item(m) => return Step::Item(j.current.as_ref().expect("current").merge(&m)),
                    Step::Done => {
                        j.current = None;
                        j.inner = None;
                        if ctx.expired() {
                            return Step::Paused;
                        }
                    }
                    Step::Paused => return Step::Paused,
                }
            },
            Op::Merge(m) => loop {
                if m.current.is_none() {
                    match m.left.next(ctx.store) {
                        Step::Item(mu) => {
                            let id = mu.get(&m.var).and_then(|t| ctx.store.term_id(t)).expect("left binds the merge variable");
                            ctx.store.seek(&mut m.right.cursor, id);
                            m.current = Some((mu, id));
                            if ctx.expired() {
                                return Step::Paused;
                            }
                        }
                        other => return other,
                    }
                }
                let (mu, id) = m.current.as_ref().expect("current");
                match ctx.store.next(&mut m.right.cursor) {
                    Some(key) if key[m.right_slot] == *id => {
                        let r = m.right.bind(key, ctx.store);
                        if mu.compatible(&r) {
                            return Step::Item(mu.merge(&r));
                        }
                    }
                    _ => {
                        m.current = None;
                        if ctx.expired() {
                            return Step::Paused;
                        }
                    }
                }
            },
            Op::Union { active, children } => loop {
                let Some(child) = children.get_mut(*active) else {
                    return Step::Done;
                };
                match child.next(ctx) {
                    Step::Done => {
                        *active += 1;
                        if *active < children.len() && ctx.expired() {
                            return Step::Paused;
                        }
                    }
                    other => return other,
                }
            },
            Op::Filter { expr, child } => loop {
                match child.next(ctx) {
                    Step::Item(m) => {
                        if expr::accepts(expr, &m) {
                            return Step::Item(m);
                        }
                        if ctx.expired() {
                            return Step::Paused;
                        }
                    }
                    other => return other,
                }
            },
        }
    }
}

fn resolve_outer(
    state: &OuterState,
    last: impl FnOnce() -> Option<SolutionMapping>,
) -> Result<Option<SolutionMapping>, EngineError> {
    match state {
        OuterState::None => Ok(None),
        OuterState::Explicit(mu) => Ok(Some(mu.clone())),
        OuterState::Inherit => last()
            .map(Some)
            .ok_or_else(|| EngineError::CorruptPlan("inherited join mapping is not recoverable".into())),
    }
}

fn describe_outer(current: &SolutionMapping, outer_last: Option<SolutionMapping>) -> OuterState {
    if outer_last.as_ref() == Some(current) {
        OuterState::Inherit
    } else {
        OuterState::Explicit(current.clone())
    }
}

/// Result of one quantum.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Quantum {
    pub mappings: Vec<SolutionMapping>,
    /// True when the plan is exhausted; otherwise it can be suspended.
    pub complete: bool,
}

/// A runnable plan. Holds no borrow of the store.
pub struct Plan {
    fingerprint: u64,
    root: Op,
    complete: bool,
}

impl Plan {
    /// Builds a fresh plan for a server-fragment subquery.
    pub fn build(node: &PlanNode, store: &TripleStore) -> Result<Plan, EngineError> {
        Plan::load(&build_plan(node, store)?, store)
    }

    pub fn load(saved: &SavedPlan, store: &TripleStore) -> Result<Plan, EngineError> {
        Plan::load_counting(saved, store, &mut Stats::default())
    }

    /// Resumes a saved plan, counting operator visits and key comparisons.
    pub fn load_counting(saved: &SavedPlan, store: &TripleStore, stats: &mut Stats) -> Result<Plan, EngineError> {
        if saved.fingerprint != store.fingerprint() {
            return Err(EngineError::StalePlan);
        }
        let root = Op::load(&saved.root, &SolutionMapping::new(), store, stats)?;
        Ok(Plan { fingerprint: saved.fingerprint, root, complete: false })
    }

    pub fn save(&self, store: &TripleStore) -> SavedPlan {
        self.save_counting(store, &mut Stats::default())
    }

    pub fn save_counting(&self, store: &TripleStore, stats: &mut Stats) -> SavedPlan {
        SavedPlan { fingerprint: self.fingerprint, root: self.root.save(store, stats) }
    }

    pub fn is_complete(&self) -> bool {
        self.complete
    }

    /// Pulls mappings until the plan is exhausted, `limit` mappings were
    /// produced, or the deadline expires at a consistent point. The deadline
    /// is consulted after every produced mapping and at the operators' own
    /// yield points.
    pub fn execute_quantum(&mut self, store: &TripleStore, deadline: &mut dyn Deadline, limit: usize) -> Quantum {
        let mut mappings = Vec::new();
        if self.complete {
            return Quantum { mappings, complete: true };
        }
        let mut ctx = Ctx { store, deadline };
        loop {
            if mappings.len() >= limit.max(1) {
                break;
            }
            match self.root.next(&mut ctx) {
                Step::Item(m) => {
                    mappings.push(m);
                    if mappings.len() >= limit.max(1) || ctx.expired() {
                        break;
                    }
                }
                Step::Done => {
                    self.complete = true;
                    break;
                }
                Step::Paused => break,
            }
        }
        Quantum { mappings, complete: self.complete }
    }

    /// Runs to completion in a single quantum.
    pub fn collect(&mut self, store: &TripleStore) -> Vec<SolutionMapping> {
        self.execute_quantum(store, &mut Unlimited, usize::MAX).mappings
    }
}

/// Runs `node` to completion, suspending and resuming through a saved plan
/// whenever `deadline` expires. Returns the concatenated mappings and the
/// number of quanta used.
pub fn run_preempted(
    node: &PlanNode,
    store: &TripleStore,
    deadline: &mut dyn Deadline,
    limit: usize,
) -> Result<(Vec<SolutionMapping>, usize), EngineError> {
    let mut saved = build_plan(node, store)?;
    let mut out = Vec::new();
    let mut quanta = 0;
    loop {
        let mut plan = Plan::load(&saved, store)?;
        let q = plan.execute_quantum(store, deadline, limit);
        quanta += 1;
        out.extend(q.mappings);
        if q.complete {
            return Ok((out, quanta));
        }
        saved = plan.save(store);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::parser::parse;
    use crate::term::{Term, Triple};
    use alloc::format;

    fn store() -> TripleStore {
        let mut triples = Vec::new();
        for i in 0..20 {
            let s = Term::iri(format!("s{i}"));
            triples.push(Triple::new(s.clone(), Term::iri("type"), Term::iri(if i % 2 == 0 { "Even" } else { "Odd" })));
            triples.push(Triple::new(s.clone(), Term::iri("next"), Term::iri(format!("s{}", (i + 1) % 20))));
            triples.push(Triple::new(s, Term::iri("val"), Term::integer(i)));
        }
        TripleStore::from_triples(triples)
    }

    fn body(q: &str) -> PlanNode {
        parse(q).unwrap()
    }

    #[test]
    fn joins_start_from_the_smallest_pattern() {
        let st = store();
        let q = body("SELECT * WHERE { ?s <next> ?n . ?s <type> <Odd> . ?n <val> ?v }");
        let plan = build_plan(&q, &st).unwrap();
        let SavedOp::IndexLoopJoin { outer, .. } = &plan.root else { panic!("{}", plan.root.pretty()) };
        let SavedOp::IndexLoopJoin { outer: first, .. } = outer.as_ref() else { panic!() };
        let SavedOp::IndexScan { pattern, .. } = first.as_ref() else { panic!() };
        assert_eq!(pattern.object, PatternTerm::Term(Term::iri("Odd")));
    }

    #[test]
    fn two_scans_sorted_on_the_same_variable_merge() {
        let st = store();
        let q = body("SELECT * WHERE { ?a <next> ?x . ?b <next> ?x }");
        let plan = build_plan(&q, &st).unwrap();
        assert_eq!(plan.root.name(), "MergeJoin");
        let (all, _) = run_preempted(&q, &st, &mut Unlimited, usize::MAX).unwrap();
        assert_eq!(all.len(), 20);
        let (again, quanta) = run_preempted(&q, &st, &mut Always, usize::MAX).unwrap();
        assert_eq!(again, all);
        assert!(quanta > 20);
    }

    #[test]
    fn suspension_at_every_yield_point_preserves_order() {
        let st = store();
        let q = body("SELECT ?s ?v WHERE { { ?s <type> <Even> } UNION { ?s <type> <Odd> } ?s <next> ?n . ?n <val> ?v FILTER(?v > 3) }");
        let (all, _) = run_preempted(&q, &st, &mut Unlimited, usize::MAX).unwrap();
        assert_eq!(all.len(), 16);
        let (again, quanta) = run_preempted(&q, &st, &mut Always, usize::MAX).unwrap();
        assert_eq!(again, all);
        assert!(quanta >= all.len());
        let (paged, _) = run_preempted(&q, &st, &mut Unlimited, 3).unwrap();
        assert_eq!(paged, all);
    }

    #[test]
    fn inherited_outer_mappings_keep_plans_small() {
        let st = store();
        let q = body("SELECT * WHERE { ?a <next> ?b . ?b <next> ?c . ?c <next> ?d }");
        let mut plan = Plan::build(&q, &st).unwrap();
        let first = plan.execute_quantum(&st, &mut Unlimited, 1);
        assert_eq!(first.mappings.len(), 1);
        let saved = plan.save(&st);
        let text = saved.root.pretty();
        assert!(!text.contains("current={"), "{text}");
        let mut resumed = Plan::load(&saved, &st).unwrap();
        let rest = resumed.collect(&st);
        assert_eq!(rest.len(), 19);
    }

    #[test]
    fn fingerprint_mismatch_is_stale() {
        let st = store();
        let q = body("SELECT * WHERE { ?a <next> ?b }");
        let mut saved = build_plan(&q, &st).unwrap();
        saved.fingerprint ^= 1;
        assert_eq!(Plan::load(&saved, &st).err(), Some(EngineError::StalePlan));
    }

    #[test]
    fn client_operators_are_rejected() {
        let st = store();
        let q = body("SELECT * WHERE { ?a <next> ?b OPTIONAL { ?b <val> ?v } }");
        assert_eq!(build_plan(&q, &st).err(), Some(EngineError::Unsupported("LeftJoin".into())));
    }

    #[test]
    fn empty_store_completes_in_one_quantum() {
        let st = TripleStore::default();
        let q = body("SELECT * WHERE { ?a <next> ?b . ?b <x> ?c }");
        let mut plan = Plan::build(&q, &st).unwrap();
        let r = plan.execute_quantum(&st, &mut Always, 10);
        assert!(r.complete && r.mappings.is_empty());
    }

    #[test]
    fn resume_counts_one_search_per_scan() {
        let st = store();
        let q = body("SELECT * WHERE { ?a <next> ?b . ?b <next> ?c . ?c <type> ?t }");
        let mut plan = Plan::build(&q, &st).unwrap();
        plan.execute_quantum(&st, &mut Unlimited, 7);
        let mut save_stats = Stats::default();
        let saved = plan.save_counting(&st, &mut save_stats);
        assert_eq!(save_stats.visits as usize, saved.root.size());
        let mut load_stats = Stats::default();
        Plan::load_counting(&saved, &st, &mut load_stats).unwrap();
        assert_eq!(load_stats.visits as usize, saved.root.size());
        let bound = 3 * (64 - (st.len() as u64).leading_zeros() as u64 + 1);
        assert!(load_stats.comparisons <= bound, "{} > {bound}", load_stats.comparisons);
    }
}
