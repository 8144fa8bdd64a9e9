//! Brute-force reference semantics for the supported query language.
//!
//! Everything here is evaluated bottom-up over a plain triple list with
//! nested loops: no indexes, no join ordering, no suspension. Test suites
//! compare the real engine and client against it.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet, HashMap};

use preemptql_core::algebra::{AggFunc, Aggregate, FilterExpr, OrderKey, PlanNode};
use preemptql_core::expr;
use preemptql_core::pattern::{PatternTerm, SolutionMapping, TriplePattern, Variable};
use preemptql_core::term::{numeric_rank, Term, Triple};

pub mod canonical;
pub mod gen;

/// Evaluates a whole query tree.
pub fn evaluate(node: &PlanNode, data: &[Triple]) -> Vec<SolutionMapping> {
    match node {
        PlanNode::Scan(tp) => data.iter().filter_map(|t| match_pattern(tp, t)).collect(),
        PlanNode::Join(a, b) => {
            let (l, r) = (evaluate(a, data), evaluate(b, data));
            pairs(&l, &r).into_iter().map(|(i, j)| merge(&l[i], &r[j])).collect()
        }
        PlanNode::Union(a, b) => {
            let mut out = evaluate(a, data);
            out.extend(evaluate(b, data));
            out
        }
        PlanNode::Filter(e, p) => evaluate(p, data).into_iter().filter(|m| holds(e, m, data)).collect(),
        PlanNode::Project(vars, p) => evaluate(p, data)
            .into_iter()
            .map(|m| m.iter().filter(|(v, _)| vars.contains(v)).map(|(v, t)| (v.clone(), t.clone())).collect())
            .collect(),
        PlanNode::LeftJoin(a, b, cond) => {
            let (l, r) = (evaluate(a, data), evaluate(b, data));
            let mut partners: Vec<Vec<usize>> = vec![Vec::new(); l.len()];
            for (i, j) in pairs(&l, &r) {
                partners[i].push(j);
            }
            let mut out = Vec::new();
            for (x, js) in l.iter().zip(partners) {
                let mut any = false;
                for j in js {
                    let m = merge(x, &r[j]);
                    if cond.as_ref().is_none_or(|c| holds(c, &m, data)) {
                        any = true;
                        out.push(m);
                    }
                }
                if !any {
                    out.push(x.clone());
                }
            }
            out
        }
        PlanNode::Distinct(p) => {
            let mut seen = BTreeSet::new();
            evaluate(p, data).into_iter().filter(|m| seen.insert(m.clone())).collect()
        }
        PlanNode::OrderBy(keys, p) => {
            let mut rows = evaluate(p, data);
            rows.sort_by(|a, b| compare_rows(a, b, keys));
            rows
        }
        PlanNode::Group(keys, aggs, p) => group(&evaluate(p, data), keys, aggs),
        PlanNode::Minus(a, b) => {
            let r = evaluate(b, data);
            evaluate(a, data)
                .into_iter()
                .filter(|x| !r.iter().any(|y| compatible(x, y) && x.domain().any(|v| y.contains(v))))
                .collect()
        }
        PlanNode::Service(_, p) => evaluate(p, data),
    }
}

/// Row comparison under ORDER BY keys.
pub fn compare_rows(a: &SolutionMapping, b: &SolutionMapping, keys: &[OrderKey]) -> Ordering {
    for k in keys {
        let o = expr::order_cmp(a.get(&k.var), b.get(&k.var));
        let o = if k.descending { o.reverse() } else { o };
        if o != Ordering::Equal {
            return o;
        }
    }
    Ordering::Equal
}

/// Number of triples matching a pattern, by linear scan.
pub fn count_matches(tp: &TriplePattern, data: &[Triple]) -> usize {
    data.iter().filter(|t| match_pattern(tp, t).is_some()).count()
}

/// Sorted copy, for multiset comparison.
pub fn canonical(mut rows: Vec<SolutionMapping>) -> Vec<SolutionMapping> {
    rows.sort();
    rows
}

fn match_pattern(tp: &TriplePattern, t: &Triple) -> Option<SolutionMapping> {
    let mut m: BTreeMap<Variable, Term> = BTreeMap::new();
    for (slot, term) in [(&tp.subject, &t.subject), (&tp.predicate, &t.predicate), (&tp.object, &t.object)] {
        match slot {
            PatternTerm::Term(c) => {
                if c != term {
                    return None;
                }
            }
            PatternTerm::Var(v) => {
                if let Some(prev) = m.get(v) {
                    if prev != term {
                        return None;
                    }
                } else {
                    m.insert(v.clone(), term.clone());
                }
            }
        }
    }
    Some(m.into_iter().collect())
}

/// Compatible (left, right) index pairs in nested-loop order. Rows are
/// bucketed on the variables bound in every row of both sides.
fn pairs(l: &[SolutionMapping], r: &[SolutionMapping]) -> Vec<(usize, usize)> {
    let always = |rows: &[SolutionMapping]| -> BTreeSet<Variable> {
        let mut it = rows.iter();
        let mut set: BTreeSet<Variable> = it.next().map(|m| m.domain().cloned().collect()).unwrap_or_default();
        for m in it {
            set.retain(|v| m.contains(v));
        }
        set
    };
    let keys: Vec<Variable> = always(l).intersection(&always(r)).cloned().collect();
    let key = |m: &SolutionMapping| -> Vec<Term> { keys.iter().map(|k| m.get(k).unwrap().clone()).collect() };
    let mut buckets: HashMap<Vec<Term>, Vec<usize>> = HashMap::new();
    for (j, y) in r.iter().enumerate() {
        buckets.entry(key(y)).or_default().push(j);
    }
    let mut out = Vec::new();
    for (i, x) in l.iter().enumerate() {
        if let Some(js) = buckets.get(&key(x)) {
            out.extend(js.iter().filter(|&&j| compatible(x, &r[j])).map(|&j| (i, j)));
        }
    }
    out
}

fn compatible(a: &SolutionMapping, b: &SolutionMapping) -> bool {
    a.iter().all(|(v, t)| b.get(v).is_none_or(|u| u == t))
}

fn merge(a: &SolutionMapping, b: &SolutionMapping) -> SolutionMapping {
    a.iter().chain(b.iter()).map(|(v, t)| (v.clone(), t.clone())).collect()
}

fn holds(e: &FilterExpr, m: &SolutionMapping, data: &[Triple]) -> bool {
    expr::accepts_with(e, m, &mut |p, mu| !evaluate(&substitute(p, mu), data).is_empty())
}

/// Replaces bound variables everywhere in a pattern, as EXISTS requires.
fn substitute(p: &PlanNode, mu: &SolutionMapping) -> PlanNode {
    let term = |t: &PatternTerm| match t {
        PatternTerm::Var(v) => mu.get(v).map_or_else(|| t.clone(), |x| PatternTerm::Term(x.clone())),
        other => other.clone(),
    };
    let sub = |c: &PlanNode| Box::new(substitute(c, mu));
    match p {
        PlanNode::Scan(tp) => {
            PlanNode::Scan(TriplePattern { subject: term(&tp.subject), predicate: term(&tp.predicate), object: term(&tp.object) })
        }
        PlanNode::Join(a, b) => PlanNode::Join(sub(a), sub(b)),
        PlanNode::Union(a, b) => PlanNode::Union(sub(a), sub(b)),
        PlanNode::Filter(e, c) => PlanNode::Filter(substitute_expr(e, mu), sub(c)),
        PlanNode::Minus(a, b) => PlanNode::Minus(sub(a), sub(b)),
        PlanNode::LeftJoin(a, b, c) => PlanNode::LeftJoin(sub(a), sub(b), c.as_ref().map(|e| substitute_expr(e, mu))),
        other => other.clone(),
    }
}

fn substitute_expr(e: &FilterExpr, mu: &SolutionMapping) -> FilterExpr {
    match e {
        FilterExpr::Var(v) => mu.get(v).map_or_else(|| e.clone(), |t| FilterExpr::Const(t.clone())),
        FilterExpr::Const(_) => e.clone(),
        FilterExpr::Not(a) => FilterExpr::Not(Box::new(substitute_expr(a, mu))),
        FilterExpr::And(a, b) => FilterExpr::and(substitute_expr(a, mu), substitute_expr(b, mu)),
        FilterExpr::Or(a, b) => FilterExpr::or(substitute_expr(a, mu), substitute_expr(b, mu)),
        FilterExpr::Cmp(op, a, b) => FilterExpr::cmp(*op, substitute_expr(a, mu), substitute_expr(b, mu)),
        FilterExpr::Exists(p) => FilterExpr::Exists(Box::new(substitute(p, mu))),
        FilterExpr::NotExists(p) => FilterExpr::NotExists(Box::new(substitute(p, mu))),
    }
}

fn group(rows: &[SolutionMapping], keys: &[Variable], aggs: &[Aggregate]) -> Vec<SolutionMapping> {
    let mut groups: Vec<(Vec<Option<Term>>, Vec<&SolutionMapping>)> = Vec::new();
    for r in rows {
        let key: Vec<Option<Term>> = keys.iter().map(|k| r.get(k).cloned()).collect();
        match groups.iter_mut().find(|(k, _)| *k == key) {
            Some((_, members)) => members.push(r),
            None => groups.push((key, vec![r])),
        }
    }
    if groups.is_empty() && keys.is_empty() {
        groups.push((Vec::new(), Vec::new()));
    }
    groups
        .into_iter()
        .map(|(key, members)| {
            let mut m: Vec<(Variable, Term)> =
                keys.iter().zip(key).filter_map(|(k, v)| v.map(|t| (k.clone(), t))).collect();
            for a in aggs {
                if let Some(t) = aggregate(a, &members) {
                    m.push((a.output.clone(), t));
                }
            }
            m.into_iter().collect()
        })
        .collect()
}

fn aggregate(a: &Aggregate, members: &[&SolutionMapping]) -> Option<Term> {
    let Some(arg) = &a.arg else {
        return Some(Term::integer(members.len() as i64));
    };
    let values: Vec<&Term> = members.iter().filter_map(|m| m.get(arg)).collect();
    match a.func {
        AggFunc::Count => Some(Term::integer(values.len() as i64)),
        AggFunc::Min => {
            let mut best: Option<&Term> = None;
            for v in values {
                if best.is_none_or(|b| expr::order_cmp(Some(v), Some(b)) == Ordering::Less) {
                    best = Some(v);
                }
            }
            best.cloned()
        }
        AggFunc::Max => {
            let mut best: Option<&Term> = None;
            for v in values {
                if best.is_none_or(|b| expr::order_cmp(Some(v), Some(b)) != Ordering::Less) {
                    best = Some(v);
                }
            }
            best.cloned()
        }
        AggFunc::Sum | AggFunc::Avg => {
            if values.iter().any(|v| !v.is_numeric()) {
                return None;
            }
            let total: f64 = values.iter().map(|v| v.numeric_value().unwrap()).sum();
            let rank = values.iter().filter_map(|v| numeric_rank(v.datatype().unwrap())).max().unwrap_or(0);
            if a.func == AggFunc::Sum {
                Some(expr::numeric_term(total, rank))
            } else if values.is_empty() {
                Some(Term::integer(0))
            } else {
                Some(expr::numeric_term(total / values.len() as f64, rank.max(1)))
            }
        }
    }
}

/// Sort keys a query's output must respect: its ORDER BY keys up to the
/// first one projected away.
pub fn visible_order(node: &PlanNode) -> Vec<OrderKey> {
    let mut projected: Option<&[Variable]> = None;
    let mut n = node;
    loop {
        match n {
            PlanNode::Distinct(c) => n = c,
            PlanNode::Project(vars, c) => {
                projected = Some(vars);
                n = c;
            }
            PlanNode::OrderBy(keys, _) => {
                return keys.iter().take_while(|k| projected.is_none_or(|p| p.contains(&k.var))).cloned().collect();
            }
            _ => return Vec::new(),
        }
    }
}

/// Checks client output against the oracle: equal multisets, and
/// non-decreasing under the visible ORDER BY keys.
pub fn verify(node: &PlanNode, got: &[SolutionMapping], data: &[Triple]) -> Result<(), String> {
    let expected = canonical(evaluate(node, data));
    let keys = visible_order(node);
    if let Some(w) = got.windows(2).position(|w| compare_rows(&w[0], &w[1], &keys) == Ordering::Greater) {
        return Err(format!("rows {w} and {} out of order: {} / {}", w + 1, got[w], got[w + 1]));
    }
    let got = canonical(got.to_vec());
    if got != expected {
        let missing = expected.iter().filter(|m| !got.contains(m)).count();
        let extra = got.iter().filter(|m| !expected.contains(m)).count();
        return Err(format!("{} rows vs {} expected ({missing} missing, {extra} unexpected)", got.len(), expected.len()));
    }
    Ok(())
}
