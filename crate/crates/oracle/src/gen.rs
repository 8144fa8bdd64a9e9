//! Seeded random fixtures: small synthetic datasets and query texts over
//! their vocabulary.

use std::collections::{BTreeMap, HashSet};

use preemptql_core::term::{Term, Triple, XSD_DECIMAL};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const NS: &str = "http://example.org/";
pub const LINKS: [&str; 4] = ["knows", "likes", "follows", "cites"];
pub const CLASSES: usize = 5;

pub fn iri(local: &str) -> Term {
    Term::iri(format!("{NS}{local}"))
}

/// `n` distinct triples. Entities link to each other through four
/// predicates; `type`, `val` (integers and decimals) and `label` (plain and
/// language-tagged strings) add literals and skew.
pub fn dataset(n: usize, seed: u64) -> Vec<Triple> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let entities = (n / 6).max(8);
    let mut seen = HashSet::with_capacity(n);
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let subject = if rng.random_ratio(1, 60) {
            Term::blank(format!("b{}", rng.random_range(0..entities / 20 + 1)))
        } else {
            iri(&format!("e{}", rng.random_range(0..entities)))
        };
        let roll = rng.random_range(0..100);
        let (p, o) = if roll < 60 {
            let link = LINKS[roll as usize % 4];
            (iri(link), iri(&format!("e{}", skewed(&mut rng, entities))))
        } else if roll < 70 {
            (iri("type"), iri(&format!("C{}", skewed(&mut rng, CLASSES))))
        } else if roll < 85 {
            let v = rng.random_range(0..100i64);
            if rng.random_ratio(1, 8) {
                (iri("val"), Term::typed_literal(format!("{v}.5"), XSD_DECIMAL))
            } else {
                (iri("val"), Term::integer(v))
            }
        } else {
            let k = rng.random_range(0..entities / 3 + 1);
            match rng.random_range(0..3) {
                0 => (iri("label"), Term::literal(format!("l{k}"))),
                1 => (iri("label"), Term::lang_literal(format!("l{k}"), "en")),
                _ => (iri("label"), Term::lang_literal(format!("l{k}"), "fr")),
            }
        };
        let t = Triple::new(subject, p, o);
        if seen.insert(t.clone()) {
            out.push(t);
        }
    }
    out
}

/// Biased toward small values so some objects are hubs.
fn skewed(rng: &mut ChaCha8Rng, n: usize) -> usize {
    let a = rng.random_range(0..n);
    let b = rng.random_range(0..n);
    if rng.random_bool(0.3) {
        a.min(b) / 4
    } else {
        a
    }
}

/// Which constructs a generated query may use.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Dialect {
    /// BGP, UNION, pure FILTER and projection only.
    Server,
    /// Everything the client supports.
    Full,
}

pub struct QueryGen<'a> {
    rng: ChaCha8Rng,
    data: &'a [Triple],
    by_predicate: BTreeMap<Term, Vec<usize>>,
    dialect: Dialect,
    /// Variables bound to literals or classes, never used as subjects.
    leaves: HashSet<String>,
    used: HashSet<String>,
}

const VARS: [&str; 8] = ["a", "b", "c", "d", "e", "f", "g", "h"];

impl<'a> QueryGen<'a> {
    pub fn new(data: &'a [Triple], seed: u64, dialect: Dialect) -> Self {
        let mut by_predicate: BTreeMap<Term, Vec<usize>> = BTreeMap::new();
        for (i, t) in data.iter().enumerate() {
            by_predicate.entry(t.predicate.clone()).or_default().push(i);
        }
        QueryGen { rng: ChaCha8Rng::seed_from_u64(seed), data, by_predicate, dialect, leaves: HashSet::new(), used: HashSet::new() }
    }

    pub fn next_query(&mut self) -> String {
        self.leaves.clear();
        self.used = HashSet::from(["a".to_string()]);
        let mut scope = vec!["a".to_string()];
        let body = self.group(&mut scope, 0);
        match self.dialect {
            Dialect::Server => {
                if self.rng.random_bool(0.5) {
                    format!("SELECT * WHERE {{ {body} }}")
                } else {
                    format!("SELECT {} WHERE {{ {body} }}", self.projection(&scope))
                }
            }
            Dialect::Full => self.modifiers(body, &scope),
        }
    }

    fn projection(&mut self, scope: &[String]) -> String {
        let mut vars: Vec<String> = scope.iter().filter(|_| self.rng.random_bool(0.6)).cloned().collect();
        if vars.is_empty() {
            vars.push(scope[0].clone());
        }
        vars.iter().map(|v| format!("?{v}")).collect::<Vec<_>>().join(" ")
    }

    fn modifiers(&mut self, body: String, scope: &[String]) -> String {
        match self.rng.random_range(0..6) {
            0 => format!("SELECT * WHERE {{ {body} }}"),
            1 => format!("SELECT DISTINCT {} WHERE {{ {body} }}", self.projection(scope)),
            2 => {
                let keys = self.order_keys(scope);
                format!("SELECT * WHERE {{ {body} }} ORDER BY {keys}")
            }
            3 => {
                let proj = self.projection(scope);
                let keys = self.order_keys(scope);
                format!("SELECT DISTINCT {proj} WHERE {{ {body} }} ORDER BY {keys}")
            }
            _ => {
                // Grouped: `?n` always holds `val` numbers, and the group
                // key may be any scoped variable.
                let key = scope[self.rng.random_range(0..scope.len())].clone();
                let numeric = format!("?{key} <{NS}val> ?n .");
                let arg = if self.rng.random_bool(0.8) { "n".to_string() } else { key.clone() };
                let aggs = ["COUNT", "SUM", "AVG", "MIN", "MAX"];
                let mut select = Vec::new();
                for (i, f) in aggs.iter().enumerate() {
                    if i == 0 || self.rng.random_bool(0.6) {
                        let a = if *f == "COUNT" && self.rng.random_bool(0.5) { "*".to_string() } else { format!("?{arg}") };
                        select.push(format!("({f}({a}) AS ?g{i})"));
                    }
                }
                if self.rng.random_bool(0.3) {
                    format!("SELECT {} WHERE {{ {numeric} {body} }}", select.join(" "))
                } else {
                    let order = if self.rng.random_bool(0.5) { format!(" ORDER BY DESC(?{key})") } else { String::new() };
                    format!("SELECT ?{key} {} WHERE {{ {numeric} {body} }} GROUP BY ?{key}{order}", select.join(" "))
                }
            }
        }
    }

    fn order_keys(&mut self, scope: &[String]) -> String {
        let n = self.rng.random_range(1..=2.min(scope.len()));
        (0..n)
            .map(|_| {
                let v = &scope[self.rng.random_range(0..scope.len())];
                if self.rng.random_bool(0.5) {
                    format!("?{v}")
                } else if self.rng.random_bool(0.5) {
                    format!("DESC(?{v})")
                } else {
                    format!("ASC(?{v})")
                }
            })
            .collect::<Vec<_>>()
            .join(" ")
    }

    fn group(&mut self, scope: &mut Vec<String>, depth: usize) -> String {
        let mut parts = vec![{ let n = self.rng.random_range(1..=3); self.bgp(scope, n) }];
        let extra = if depth == 0 { self.rng.random_range(0..=2) } else { self.rng.random_range(0..=1) };
        for _ in 0..extra {
            let roll = self.rng.random_range(0..10);
            let full = self.dialect == Dialect::Full;
            let part = match roll {
                0..=2 if depth < 2 => {
                    let mut left = self.anchor(scope);
                    let mut right = left.clone();
                    let a = self.group(&mut left, depth + 1);
                    let b = self.group(&mut right, depth + 1);
                    for v in left {
                        if right.contains(&v) && !scope.contains(&v) {
                            scope.push(v);
                        }
                    }
                    format!("{{ {a} }} UNION {{ {b} }}")
                }
                3..=4 => format!("FILTER({})", self.expr(scope, 2)),
                5 if full => {
                    let mut inner = self.anchor(scope);
                    let g = { let n = self.rng.random_range(1..=2); self.bgp(&mut inner, n) };
                    let cond = if self.rng.random_bool(0.3) { format!(" FILTER({})", self.expr(&inner, 1)) } else { String::new() };
                    for v in inner {
                        if !scope.contains(&v) {
                            scope.push(v);
                        }
                    }
                    format!("OPTIONAL {{ {g}{cond} }}")
                }
                6 if full => {
                    let mut inner = self.anchor(scope);
                    let g = { let n = self.rng.random_range(1..=2); self.bgp(&mut inner, n) };
                    format!("MINUS {{ {g} }}")
                }
                7 if full => {
                    let mut inner = self.anchor(scope);
                    let g = self.bgp(&mut inner, 1);
                    let not = if self.rng.random_bool(0.5) { "NOT " } else { "" };
                    format!("FILTER {not}EXISTS {{ {g} }}")
                }
                8 if full => {
                    let g = self.bgp(scope, 1);
                    format!("SERVICE <http://remote.example.org/sparql> {{ {g} }}")
                }
                _ => self.bgp(scope, 1),
            };
            parts.push(part);
        }
        parts.join(" ")
    }

    /// Subgroups are evaluated on their own, so each one grows from a
    /// single shared variable to stay connected.
    fn anchor(&mut self, scope: &[String]) -> Vec<String> {
        let entities: Vec<&String> = scope.iter().filter(|v| !self.leaves.contains(*v)).collect();
        match entities.is_empty() {
            true => vec![scope[self.rng.random_range(0..scope.len())].clone()],
            false => vec![entities[self.rng.random_range(0..entities.len())].clone()],
        }
    }

    fn bgp(&mut self, scope: &mut Vec<String>, n: usize) -> String {
        let mut out = Vec::new();
        for _ in 0..n {
            out.push(self.pattern(scope));
        }
        out.join(" ")
    }

    fn fresh_var(&mut self, scope: &mut Vec<String>) -> String {
        for v in VARS {
            if !self.used.contains(v) {
                self.used.insert(v.to_string());
                scope.push(v.to_string());
                return v.to_string();
            }
        }
        scope[self.rng.random_range(0..scope.len())].clone()
    }

    fn pattern(&mut self, scope: &mut Vec<String>) -> String {
        let entities: Vec<String> = scope.iter().filter(|v| !self.leaves.contains(*v)).cloned().collect();
        let pool = if entities.is_empty() { scope.clone() } else { entities };
        let existing = pool[self.rng.random_range(0..pool.len())].clone();
        let roll = self.rng.random_range(0..20);
        let link = iri(LINKS[self.rng.random_range(0..LINKS.len())]);
        let any = {
            let preds: Vec<&Term> = self.by_predicate.keys().collect();
            preds[self.rng.random_range(0..preds.len())].clone()
        };
        let sample = |g: &mut Self, p: &Term| {
            let rows = &g.by_predicate[p];
            g.data[rows[g.rng.random_range(0..rows.len())]].clone()
        };
        let (s, p, o) = match roll {
            0..=9 => {
                let fresh = self.fresh_var(scope);
                if !LINKS.iter().any(|l| iri(l) == any) {
                    self.leaves.insert(fresh.clone());
                }
                (format!("?{existing}"), any, format!("?{fresh}"))
            }
            10..=12 => (format!("?{}", self.fresh_var(scope)), link, format!("?{existing}")),
            13..=14 => {
                let t = sample(self, &any);
                (format!("?{existing}"), any, t.object.to_string())
            }
            15 => {
                let t = sample(self, &link);
                (t.subject.to_string(), link, format!("?{existing}"))
            }
            16 => {
                let other = pool[self.rng.random_range(0..pool.len())].clone();
                (format!("?{existing}"), link, format!("?{other}"))
            }
            _ => {
                let t = sample(self, &any);
                let pv = self.fresh_var(scope);
                let v = self.fresh_var(scope);
                self.leaves.insert(pv.clone());
                self.leaves.insert(v.clone());
                return format!("{} ?{pv} ?{v} .", t.subject);
            }
        };
        format!("{s} {p} {o} .")
    }

    fn expr(&mut self, scope: &[String], depth: usize) -> String {
        let v = |g: &mut Self| format!("?{}", scope[g.rng.random_range(0..scope.len())]);
        if depth > 0 && self.rng.random_bool(0.35) {
            let a = self.expr(scope, depth - 1);
            let b = self.expr(scope, depth - 1);
            return match self.rng.random_range(0..3) {
                0 => format!("({a} && {b})"),
                1 => format!("({a} || {b})"),
                _ => format!("!({a})"),
            };
        }
        let ops = ["=", "!=", "<", "<=", ">", ">="];
        let op = ops[self.rng.random_range(0..ops.len())];
        let lhs = v(self);
        let rhs = match self.rng.random_range(0..5) {
            0 | 1 => format!("{}", self.rng.random_range(0..100)),
            2 => v(self),
            3 => {
                let t = &self.data[self.rng.random_range(0..self.data.len())];
                t.object.to_string()
            }
            _ => format!("\"l{}\"", self.rng.random_range(0..50)),
        };
        format!("{lhs} {op} {rhs}")
    }
}
