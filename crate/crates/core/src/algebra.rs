//! Query algebra, fragment classification and subquery serialization.
//!
//! The server fragment is the mapping-at-a-time subset: triple patterns,
//! inner joins, multiset unions, pure filters and projection. Everything
//! else needs whole collections of mappings and runs on the client.

use alloc::boxed::Box;
use alloc::collections::BTreeSet;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt::{self, Write};

use crate::pattern::{TriplePattern, Variable};
use crate::term::Term;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CmpOp {
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
}

impl CmpOp {
    pub fn symbol(self) -> &'static str {
        match self {
            CmpOp::Eq => "=",
            CmpOp::Ne => "!=",
            CmpOp::Lt => "<",
            CmpOp::Le => "<=",
            CmpOp::Gt => ">",
            CmpOp::Ge => ">=",
        }
    }

    pub fn to_byte(self) -> u8 {
        self as u8
    }

    pub fn from_byte(b: u8) -> Option<Self> {
        Some(match b {
            0 => CmpOp::Eq,
            1 => CmpOp::Ne,
            2 => CmpOp::Lt,
            3 => CmpOp::Le,
            4 => CmpOp::Gt,
            5 => CmpOp::Ge,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum FilterExpr {
    Var(Variable),
    Const(Term),
    Not(Box<FilterExpr>),
    And(Box<FilterExpr>, Box<FilterExpr>),
    Or(Box<FilterExpr>, Box<FilterExpr>),
    Cmp(CmpOp, Box<FilterExpr>, Box<FilterExpr>),
    Exists(Box<PlanNode>),
    NotExists(Box<PlanNode>),
}

impl FilterExpr {
    pub fn cmp(op: CmpOp, a: FilterExpr, b: FilterExpr) -> Self {
        FilterExpr::Cmp(op, Box::new(a), Box::new(b))
    }

    pub fn and(a: FilterExpr, b: FilterExpr) -> Self {
        FilterExpr::And(Box::new(a), Box::new(b))
    }

    pub fn or(a: FilterExpr, b: FilterExpr) -> Self {
        FilterExpr::Or(Box::new(a), Box::new(b))
    }

    pub fn var(name: &str) -> Self {
        FilterExpr::Var(Variable::new(name))
    }

    /// True when the expression has no EXISTS / NOT EXISTS node.
    pub fn is_pure(&self) -> bool {
        match self {
            FilterExpr::Var(_) | FilterExpr::Const(_) => true,
            FilterExpr::Not(e) => e.is_pure(),
            FilterExpr::And(a, b) | FilterExpr::Or(a, b) | FilterExpr::Cmp(_, a, b) => a.is_pure() && b.is_pure(),
            FilterExpr::Exists(_) | FilterExpr::NotExists(_) => false,
        }
    }

    pub fn variables(&self, out: &mut BTreeSet<Variable>) {
        match self {
            FilterExpr::Var(v) => {
                out.insert(v.clone());
            }
            FilterExpr::Const(_) | FilterExpr::Exists(_) | FilterExpr::NotExists(_) => {}
            FilterExpr::Not(e) => e.variables(out),
            FilterExpr::And(a, b) | FilterExpr::Or(a, b) | FilterExpr::Cmp(_, a, b) => {
                a.variables(out);
                b.variables(out);
            }
        }
    }

    /// Number of nodes in the expression tree.
    pub fn size(&self) -> usize {
        match self {
            FilterExpr::Var(_) | FilterExpr::Const(_) | FilterExpr::Exists(_) | FilterExpr::NotExists(_) => 1,
            FilterExpr::Not(e) => 1 + e.size(),
            FilterExpr::And(a, b) | FilterExpr::Or(a, b) | FilterExpr::Cmp(_, a, b) => 1 + a.size() + b.size(),
        }
    }

    /// Replaces variables bound in `mu`.
    pub fn substitute(&self, mu: &crate::pattern::SolutionMapping) -> FilterExpr {
        match self {
            FilterExpr::Var(v) => mu.get(v).map_or_else(|| self.clone(), |t| FilterExpr::Const(t.clone())),
            FilterExpr::Const(_) | FilterExpr::Exists(_) | FilterExpr::NotExists(_) => self.clone(),
            FilterExpr::Not(e) => FilterExpr::Not(Box::new(e.substitute(mu))),
            FilterExpr::And(a, b) => FilterExpr::and(a.substitute(mu), b.substitute(mu)),
            FilterExpr::Or(a, b) => FilterExpr::or(a.substitute(mu), b.substitute(mu)),
            FilterExpr::Cmp(op, a, b) => FilterExpr::cmp(*op, a.substitute(mu), b.substitute(mu)),
        }
    }
}

/// Fully parenthesized concrete syntax.
impl fmt::Display for FilterExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FilterExpr::Var(v) => write!(f, "{v}"),
            FilterExpr::Const(t) => write!(f, "{t}"),
            FilterExpr::Not(e) => write!(f, "(!{e})"),
            FilterExpr::And(a, b) => write!(f, "({a} && {b})"),
            FilterExpr::Or(a, b) => write!(f, "({a} || {b})"),
            FilterExpr::Cmp(op, a, b) => write!(f, "({a} {} {b})", op.symbol()),
            FilterExpr::Exists(p) => write!(f, "EXISTS {{ {} }}", GroupSyntax(p)),
            FilterExpr::NotExists(p) => write!(f, "NOT EXISTS {{ {} }}", GroupSyntax(p)),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum AggFunc {
    Count,
    Sum,
    Avg,
    Min,
    Max,
}

impl AggFunc {
    pub fn name(self) -> &'static str {
        match self {
            AggFunc::Count => "COUNT",
            AggFunc::Sum => "SUM",
            AggFunc::Avg => "AVG",
            AggFunc::Min => "MIN",
            AggFunc::Max => "MAX",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Aggregate {
    pub func: AggFunc,
    /// `None` is `COUNT(*)`.
    pub arg: Option<Variable>,
    pub output: Variable,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct OrderKey {
    pub var: Variable,
    pub descending: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Fragment {
    Server,
    Client,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum PlanNode {
    Scan(TriplePattern),
    Join(Box<PlanNode>, Box<PlanNode>),
    Union(Box<PlanNode>, Box<PlanNode>),
    Filter(FilterExpr, Box<PlanNode>),
    Project(Vec<Variable>, Box<PlanNode>),
    LeftJoin(Box<PlanNode>, Box<PlanNode>, Option<FilterExpr>),
    Distinct(Box<PlanNode>),
    OrderBy(Vec<OrderKey>, Box<PlanNode>),
    Group(Vec<Variable>, Vec<Aggregate>, Box<PlanNode>),
    Minus(Box<PlanNode>, Box<PlanNode>),
    Service(String, Box<PlanNode>),
}

impl PlanNode {
    pub fn join(a: PlanNode, b: PlanNode) -> Self {
        PlanNode::Join(Box::new(a), Box::new(b))
    }

    pub fn union(a: PlanNode, b: PlanNode) -> Self {
        PlanNode::Union(Box::new(a), Box::new(b))
    }

    pub fn filter(e: FilterExpr, p: PlanNode) -> Self {
        PlanNode::Filter(e, Box::new(p))
    }

    pub fn project(vars: Vec<Variable>, p: PlanNode) -> Self {
        PlanNode::Project(vars, Box::new(p))
    }

    pub fn children(&self) -> Vec<&PlanNode> {
        match self {
            PlanNode::Scan(_) => Vec::new(),
            PlanNode::Join(a, b) | PlanNode::Union(a, b) | PlanNode::Minus(a, b) | PlanNode::LeftJoin(a, b, _) => {
                alloc::vec![a, b]
            }
            PlanNode::Filter(_, p)
            | PlanNode::Project(_, p)
            | PlanNode::Distinct(p)
            | PlanNode::OrderBy(_, p)
            | PlanNode::Group(_, _, p)
            | PlanNode::Service(_, p) => alloc::vec![p],
        }
    }

    /// |Q|: number of operator nodes in the tree.
    pub fn size(&self) -> usize {
        1 + self.children().iter().map(|c| c.size()).sum::<usize>()
    }

    pub fn name(&self) -> &'static str {
        match self {
            PlanNode::Scan(_) => "Scan",
            PlanNode::Join(..) => "Join",
            PlanNode::Union(..) => "Union",
            PlanNode::Filter(e, _) if !e.is_pure() => "Filter(EXISTS)",
            PlanNode::Filter(..) => "Filter",
            PlanNode::Project(..) => "Project",
            PlanNode::LeftJoin(..) => "LeftJoin",
            PlanNode::Distinct(_) => "Distinct",
            PlanNode::OrderBy(..) => "OrderBy",
            PlanNode::Group(..) => "GroupBy",
            PlanNode::Minus(..) => "Minus",
            PlanNode::Service(..) => "Service",
        }
    }

    /// Fragment of this node's own operator, ignoring its children.
    pub fn fragment(&self) -> Fragment {
        match self {
            PlanNode::Scan(_) | PlanNode::Join(..) | PlanNode::Union(..) | PlanNode::Project(..) => Fragment::Server,
            PlanNode::Filter(e, _) if e.is_pure() => Fragment::Server,
            _ => Fragment::Client,
        }
    }

    /// True when the whole subtree is in the server fragment.
    pub fn is_server_evaluable(&self) -> bool {
        self.first_client_node().is_none()
    }

    /// The first client-only node in pre-order, if any.
    pub fn first_client_node(&self) -> Option<&PlanNode> {
        if self.fragment() == Fragment::Client {
            return Some(self);
        }
        self.children().into_iter().find_map(|c| c.first_client_node())
    }

    /// var(P): every variable the pattern can bind.
    pub fn variables(&self) -> BTreeSet<Variable> {
        let mut out = BTreeSet::new();
        self.collect_variables(&mut out);
        out
    }

    fn collect_variables(&self, out: &mut BTreeSet<Variable>) {
        match self {
            PlanNode::Scan(tp) => out.extend(tp.variables().into_iter().cloned()),
            PlanNode::Project(vars, _) => out.extend(vars.iter().cloned()),
            PlanNode::Group(keys, aggs, _) => {
                out.extend(keys.iter().cloned());
                out.extend(aggs.iter().map(|a| a.output.clone()));
            }
            PlanNode::Minus(a, _) => a.collect_variables(out),
            _ => {
                for c in self.children() {
                    c.collect_variables(out);
                }
            }
        }
    }

    /// Variables bound in every solution of the pattern.
    pub fn certain_variables(&self) -> BTreeSet<Variable> {
        match self {
            PlanNode::Scan(tp) => tp.variables().into_iter().cloned().collect(),
            PlanNode::Join(a, b) => {
                let mut s = a.certain_variables();
                s.extend(b.certain_variables());
                s
            }
            PlanNode::Union(a, b) => {
                let b = b.certain_variables();
                a.certain_variables().into_iter().filter(|v| b.contains(v)).collect()
            }
            PlanNode::Project(vars, p) => {
                let c = p.certain_variables();
                vars.iter().filter(|v| c.contains(*v)).cloned().collect()
            }
            PlanNode::Group(keys, aggs, p) => {
                let c = p.certain_variables();
                let mut s: BTreeSet<Variable> = keys.iter().filter(|v| c.contains(*v)).cloned().collect();
                s.extend(aggs.iter().filter(|a| a.func == AggFunc::Count).map(|a| a.output.clone()));
                s
            }
            PlanNode::LeftJoin(a, _, _) | PlanNode::Minus(a, _) => a.certain_variables(),
            PlanNode::Filter(_, p) | PlanNode::Distinct(p) | PlanNode::OrderBy(_, p) | PlanNode::Service(_, p) => {
                p.certain_variables()
            }
        }
    }

    /// Diagnostic dump: one node per line, children indented by two spaces.
    pub fn pretty(&self) -> String {
        let mut out = String::new();
        self.pretty_into(0, &mut out);
        out
    }

    fn pretty_into(&self, depth: usize, out: &mut String) {
        for _ in 0..depth {
            out.push_str("  ");
        }
        let _ = match self {
            PlanNode::Scan(tp) => writeln!(out, "Scan {tp}"),
            PlanNode::Filter(e, _) => writeln!(out, "Filter {e}"),
            PlanNode::Project(vars, _) => writeln!(out, "Project {}", join_vars(vars)),
            PlanNode::LeftJoin(_, _, Some(e)) => writeln!(out, "LeftJoin {e}"),
            PlanNode::OrderBy(keys, _) => {
                let keys: Vec<String> = keys
                    .iter()
                    .map(|k| if k.descending { format!("DESC({})", k.var) } else { format!("{}", k.var) })
                    .collect();
                writeln!(out, "OrderBy {}", keys.join(" "))
            }
            PlanNode::Group(keys, aggs, _) => {
                let aggs: Vec<String> = aggs.iter().map(aggregate_syntax).collect();
                writeln!(out, "GroupBy [{}] {}", join_vars(keys), aggs.join(" "))
            }
            PlanNode::Service(ep, _) => writeln!(out, "Service <{ep}>"),
            other => writeln!(out, "{}", other.name()),
        };
        for c in self.children() {
            c.pretty_into(depth + 1, out);
        }
    }
}

fn join_vars(vars: &[Variable]) -> String {
    let v: Vec<String> = vars.iter().map(|v| format!("{v}")).collect();
    v.join(" ")
}

fn aggregate_syntax(a: &Aggregate) -> String {
    match &a.arg {
        Some(v) => format!("({}({v}) AS {})", a.func.name(), a.output),
        None => format!("({}(*) AS {})", a.func.name(), a.output),
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FragmentError {
    pub operator: &'static str,
}

impl fmt::Display for FragmentError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "operator {} is not in the server fragment", self.operator)
    }
}

/// Renders a server-fragment tree as a query that parses back to the same tree.
pub fn serialize_subquery(plan: &PlanNode) -> Result<String, FragmentError> {
    if let Some(node) = plan.first_client_node() {
        return Err(FragmentError { operator: node.name() });
    }
    let (head, body) = match plan {
        PlanNode::Project(vars, p) => (join_vars(vars), p.as_ref()),
        p => (String::from("*"), p),
    };
    if let Some(nested) = nested_projection(body) {
        return Err(FragmentError { operator: nested });
    }
    Ok(format!("SELECT {head} WHERE {{ {} }}", GroupSyntax(body)))
}

fn nested_projection(p: &PlanNode) -> Option<&'static str> {
    if matches!(p, PlanNode::Project(..)) {
        return Some("Project (nested)");
    }
    p.children().into_iter().find_map(nested_projection)
}

/// The inside of a group graph pattern denoting exactly one plan node.
struct GroupSyntax<'a>(&'a PlanNode);

impl fmt::Display for GroupSyntax<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.0 {
            PlanNode::Scan(tp) => write!(f, "{tp} ."),
            PlanNode::Join(a, b) => write!(f, "{{ {} }} {{ {} }}", GroupSyntax(a), GroupSyntax(b)),
            PlanNode::Union(a, b) => write!(f, "{{ {} }} UNION {{ {} }}", GroupSyntax(a), GroupSyntax(b)),
            PlanNode::Filter(e, p) => write!(f, "{{ {} }} FILTER {}", GroupSyntax(p), FilterArg(e)),
            PlanNode::LeftJoin(a, b, cond) => {
                write!(f, "{{ {} }} OPTIONAL {{ {{ {} }}", GroupSyntax(a), GroupSyntax(b))?;
                if let Some(e) = cond {
                    write!(f, " FILTER {}", FilterArg(e))?;
                }
                f.write_str(" }")
            }
            PlanNode::Minus(a, b) => write!(f, "{{ {} }} MINUS {{ {} }}", GroupSyntax(a), GroupSyntax(b)),
            PlanNode::Service(ep, p) => write!(f, "SERVICE <{ep}> {{ {} }}", GroupSyntax(p)),
            other => write!(f, "# unsupported {}", other.name()),
        }
    }
}

struct FilterArg<'a>(&'a FilterExpr);

impl fmt::Display for FilterArg<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.0 {
            e @ (FilterExpr::Exists(_) | FilterExpr::NotExists(_)) => write!(f, "{e}"),
            FilterExpr::Var(_) | FilterExpr::Const(_) => write!(f, "({})", self.0),
            e => write!(f, "{e}"),
        }
    }
}

/// A plan with every maximal server-evaluable subtree replaced by a remote
/// subquery leaf.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ClientPlan {
    Remote(PlanNode),
    /// A SERVICE clause evaluated on its own.
    Service { endpoint: String, pattern: PlanNode },
    /// `left` bind-joined with a SERVICE pattern.
    ServiceJoin { left: Box<ClientPlan>, endpoint: String, pattern: PlanNode },
    Join(Box<ClientPlan>, Box<ClientPlan>),
    Union(Box<ClientPlan>, Box<ClientPlan>),
    Filter(FilterExpr, Box<ClientPlan>),
    Project(Vec<Variable>, Box<ClientPlan>),
    LeftJoin { left: Box<ClientPlan>, right: Box<ClientPlan>, cond: Option<FilterExpr> },
    Distinct(Box<ClientPlan>),
    OrderBy(Vec<OrderKey>, Box<ClientPlan>),
    Group(Vec<Variable>, Vec<Aggregate>, Box<ClientPlan>),
    Minus(Box<ClientPlan>, Box<ClientPlan>),
}

impl ClientPlan {
    pub fn fragment(&self) -> Fragment {
        match self {
            ClientPlan::Remote(_) | ClientPlan::Service { .. } => Fragment::Server,
            _ => Fragment::Client,
        }
    }

    pub fn children(&self) -> Vec<&ClientPlan> {
        match self {
            ClientPlan::Remote(_) | ClientPlan::Service { .. } => Vec::new(),
            ClientPlan::ServiceJoin { left, .. } => alloc::vec![left],
            ClientPlan::Join(a, b) | ClientPlan::Union(a, b) | ClientPlan::Minus(a, b) => alloc::vec![a, b],
            ClientPlan::LeftJoin { left, right, .. } => alloc::vec![left, right],
            ClientPlan::Filter(_, p)
            | ClientPlan::Project(_, p)
            | ClientPlan::Distinct(p)
            | ClientPlan::OrderBy(_, p)
            | ClientPlan::Group(_, _, p) => alloc::vec![p],
        }
    }

    pub fn remote_leaves(&self) -> usize {
        match self {
            ClientPlan::Remote(_) | ClientPlan::Service { .. } => 1,
            ClientPlan::ServiceJoin { left, .. } => 1 + left.remote_leaves(),
            other => other.children().iter().map(|c| c.remote_leaves()).sum(),
        }
    }

    pub fn pretty(&self) -> String {
        let mut out = String::new();
        self.pretty_into(0, &mut out);
        out
    }

    fn pretty_into(&self, depth: usize, out: &mut String) {
        for _ in 0..depth {
            out.push_str("  ");
        }
        let label = match self {
            ClientPlan::Remote(p) => {
                let _ = writeln!(out, "[server] Subquery |Q|={}", p.size());
                for line in p.pretty().lines() {
                    for _ in 0..=depth {
                        out.push_str("  ");
                    }
                    out.push_str(line);
                    out.push('\n');
                }
                return;
            }
            ClientPlan::Service { endpoint, .. } => format!("[server] Service <{endpoint}>"),
            ClientPlan::ServiceJoin { endpoint, .. } => format!("[client] BindJoin SERVICE <{endpoint}>"),
            ClientPlan::Join(..) => "[client] Join".into(),
            ClientPlan::Union(..) => "[client] Union".into(),
            ClientPlan::Filter(e, _) => format!("[client] Filter {e}"),
            ClientPlan::Project(v, _) => format!("[client] Project {}", join_vars(v)),
            ClientPlan::LeftJoin { .. } => "[client] LeftJoin".into(),
            ClientPlan::Distinct(_) => "[client] Distinct".into(),
            ClientPlan::OrderBy(..) => "[client] OrderBy".into(),
            ClientPlan::Group(..) => "[client] GroupBy".into(),
            ClientPlan::Minus(..) => "[client] Minus".into(),
        };
        out.push_str(&label);
        out.push('\n');
        for c in self.children() {
            c.pretty_into(depth + 1, out);
        }
    }
}

/// Labels every node and groups maximal server-evaluable subtrees, bottom-up.
pub fn classify(plan: &PlanNode) -> ClientPlan {
    if plan.is_server_evaluable() {
        return ClientPlan::Remote(plan.clone());
    }
    let sub = |p: &PlanNode| Box::new(classify(p));
    match plan {
        PlanNode::Service(ep, p) => ClientPlan::Service { endpoint: ep.clone(), pattern: (**p).clone() },
        PlanNode::Join(a, b) => match (a.as_ref(), b.as_ref()) {
            (left, PlanNode::Service(ep, p)) | (PlanNode::Service(ep, p), left) => {
                ClientPlan::ServiceJoin { left: sub(left), endpoint: ep.clone(), pattern: (**p).clone() }
            }
            _ => ClientPlan::Join(sub(a), sub(b)),
        },
        PlanNode::Union(a, b) => ClientPlan::Union(sub(a), sub(b)),
        PlanNode::Filter(e, p) => ClientPlan::Filter(e.clone(), sub(p)),
        PlanNode::Project(v, p) => ClientPlan::Project(v.clone(), sub(p)),
        PlanNode::LeftJoin(a, b, cond) => ClientPlan::LeftJoin { left: sub(a), right: sub(b), cond: cond.clone() },
        PlanNode::Distinct(p) => ClientPlan::Distinct(sub(p)),
        PlanNode::OrderBy(k, p) => ClientPlan::OrderBy(k.clone(), sub(p)),
        PlanNode::Group(k, a, p) => ClientPlan::Group(k.clone(), a.clone(), sub(p)),
        PlanNode::Minus(a, b) => ClientPlan::Minus(sub(a), sub(b)),
        PlanNode::Scan(_) => unreachable!("scans are server-evaluable"),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pattern::PatternTerm;

    fn scan(s: &str, p: &str, o: &str) -> PlanNode {
        let pt = |x: &str| match x.strip_prefix('?') {
            Some(v) => PatternTerm::var(v),
            None => PatternTerm::Term(Term::iri(x)),
        };
        PlanNode::Scan(TriplePattern::new(pt(s), pt(p), pt(o)))
    }

    #[test]
    fn every_full_mappings_variant_is_client() {
        let b = || Box::new(scan("?a", "p", "?b"));
        let client = [
            PlanNode::LeftJoin(b(), b(), None),
            PlanNode::Distinct(b()),
            PlanNode::OrderBy(Vec::new(), b()),
            PlanNode::Group(Vec::new(), Vec::new(), b()),
            PlanNode::Minus(b(), b()),
            PlanNode::Service("http://x".into(), b()),
            PlanNode::Filter(FilterExpr::Exists(b()), b()),
        ];
        for node in client {
            assert_eq!(node.fragment(), Fragment::Client, "{}", node.name());
            assert!(matches!(classify(&node), ClientPlan::Distinct(_) | ClientPlan::LeftJoin { .. }
                | ClientPlan::OrderBy(..) | ClientPlan::Group(..) | ClientPlan::Minus(..)
                | ClientPlan::Service { .. } | ClientPlan::Filter(..)));
        }
        let server = [
            scan("?a", "p", "?b"),
            PlanNode::join(scan("?a", "p", "?b"), scan("?b", "q", "?c")),
            PlanNode::union(scan("?a", "p", "?b"), scan("?b", "q", "?c")),
            PlanNode::filter(FilterExpr::var("a"), scan("?a", "p", "?b")),
            PlanNode::project(alloc::vec![Variable::new("a")], scan("?a", "p", "?b")),
        ];
        for node in server {
            assert_eq!(node.fragment(), Fragment::Server);
            assert!(matches!(classify(&node), ClientPlan::Remote(_)));
        }
    }

    #[test]
    fn serialize_rejects_client_nodes() {
        let p = PlanNode::OrderBy(Vec::new(), Box::new(scan("?a", "p", "?b")));
        assert_eq!(serialize_subquery(&p).unwrap_err().operator, "OrderBy");
    }

    #[test]
    fn certain_variables_of_union_is_intersection() {
        let u = PlanNode::union(scan("?a", "p", "?b"), scan("?a", "q", "?c"));
        let c = u.certain_variables();
        assert_eq!(c.len(), 1);
        assert!(c.contains(&Variable::new("a")));
        assert_eq!(u.variables().len(), 3);
    }

    #[test]
    fn pretty_prints_one_node_per_line() {
        let p = PlanNode::project(
            alloc::vec![Variable::new("a")],
            PlanNode::join(scan("?a", "p", "?b"), scan("?b", "q", "?c")),
        );
        let text = p.pretty();
        assert_eq!(text.lines().count(), 4);
        assert!(text.lines().nth(2).unwrap().starts_with("    Scan"));
    }
}
