//! Filter evaluation and the solution ordering used by ORDER BY, MIN and MAX.

use alloc::format;
use alloc::string::ToString;
use core::cmp::Ordering;

use crate::algebra::{CmpOp, FilterExpr, PlanNode};
use crate::pattern::SolutionMapping;
use crate::term::{numeric_rank, Term, TermKind, XSD_BOOLEAN, XSD_DECIMAL, XSD_DOUBLE, XSD_INTEGER, XSD_STRING};

/// Evaluation failed (unbound variable, incomparable operands, no boolean value).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TypeError;

#[derive(Debug, Clone, PartialEq)]
pub enum Value {
    Bool(bool),
    Term(Term),
}

impl Value {
    pub fn ebv(&self) -> Result<bool, TypeError> {
        match self {
            Value::Bool(b) => Ok(*b),
            Value::Term(t) => effective_boolean_value(t),
        }
    }
}

/// Effective boolean value of a term.
pub fn effective_boolean_value(t: &Term) -> Result<bool, TypeError> {
    if t.kind() != TermKind::Literal {
        return Err(TypeError);
    }
    match t.datatype() {
        Some(XSD_BOOLEAN) => match t.lexical() {
            "true" | "1" => Ok(true),
            "false" | "0" => Ok(false),
            _ => Err(TypeError),
        },
        Some(dt) if numeric_rank(dt).is_some() => t.numeric_value().map(|v| v != 0.0).ok_or(TypeError),
        None if t.language().is_some() => Ok(!t.lexical().is_empty()),
        None | Some(XSD_STRING) => Ok(!t.lexical().is_empty()),
        Some(_) => Err(TypeError),
    }
}

#[derive(PartialEq, Eq)]
enum Class {
    Numeric,
    Literal,
    Iri,
    Blank,
}

fn class(t: &Term) -> Class {
    match t.kind() {
        TermKind::Iri => Class::Iri,
        TermKind::Blank => Class::Blank,
        TermKind::Literal if t.is_numeric() => Class::Numeric,
        TermKind::Literal => Class::Literal,
    }
}

/// Compares two terms. Numerics compare by value; other terms compare only
/// within their own kind, structurally for equality and by term order
/// otherwise. Mixed kinds are a type error.
pub fn compare(op: CmpOp, a: &Term, b: &Term) -> Result<bool, TypeError> {
    let (ca, cb) = (class(a), class(b));
    if ca != cb {
        return Err(TypeError);
    }
    let ord = if ca == Class::Numeric {
        let (x, y) = (a.numeric_value().ok_or(TypeError)?, b.numeric_value().ok_or(TypeError)?);
        x.partial_cmp(&y).ok_or(TypeError)?
    } else {
        a.cmp(b)
    };
    Ok(match op {
        CmpOp::Eq => ord == Ordering::Equal,
        CmpOp::Ne => ord != Ordering::Equal,
        CmpOp::Lt => ord == Ordering::Less,
        CmpOp::Le => ord != Ordering::Greater,
        CmpOp::Gt => ord == Ordering::Greater,
        CmpOp::Ge => ord != Ordering::Less,
    })
}

/// Evaluates an expression. `exists` answers EXISTS sub-patterns for the
/// current mapping.
pub fn eval(
    expr: &FilterExpr,
    mu: &SolutionMapping,
    exists: &mut dyn FnMut(&PlanNode, &SolutionMapping) -> bool,
) -> Result<Value, TypeError> {
    match expr {
        FilterExpr::Var(v) => mu.get(v).cloned().map(Value::Term).ok_or(TypeError),
        FilterExpr::Const(t) => Ok(Value::Term(t.clone())),
        FilterExpr::Not(e) => Ok(Value::Bool(!eval(e, mu, exists)?.ebv()?)),
        FilterExpr::And(a, b) => {
            let l = eval(a, mu, exists).and_then(|v| v.ebv());
            if l == Ok(false) {
                return Ok(Value::Bool(false));
            }
            let r = eval(b, mu, exists).and_then(|v| v.ebv());
            match (l, r) {
                (_, Ok(false)) => Ok(Value::Bool(false)),
                (Ok(true), Ok(true)) => Ok(Value::Bool(true)),
                _ => Err(TypeError),
            }
        }
        FilterExpr::Or(a, b) => {
            let l = eval(a, mu, exists).and_then(|v| v.ebv());
            if l == Ok(true) {
                return Ok(Value::Bool(true));
            }
            let r = eval(b, mu, exists).and_then(|v| v.ebv());
            match (l, r) {
                (_, Ok(true)) => Ok(Value::Bool(true)),
                (Ok(false), Ok(false)) => Ok(Value::Bool(false)),
                _ => Err(TypeError),
            }
        }
        FilterExpr::Cmp(op, a, b) => {
            let term = |v: Value| match v {
                Value::Term(t) => t,
                Value::Bool(b) => Term::typed_literal(if b { "true" } else { "false" }, XSD_BOOLEAN),
            };
            let x = term(eval(a, mu, exists)?);
            let y = term(eval(b, mu, exists)?);
            compare(*op, &x, &y).map(Value::Bool)
        }
        FilterExpr::Exists(p) => Ok(Value::Bool(exists(p, mu))),
        FilterExpr::NotExists(p) => Ok(Value::Bool(!exists(p, mu))),
    }
}

/// True when the expression evaluates to true; errors reject.
pub fn accepts_with(
    expr: &FilterExpr,
    mu: &SolutionMapping,
    exists: &mut dyn FnMut(&PlanNode, &SolutionMapping) -> bool,
) -> bool {
    eval(expr, mu, exists).and_then(|v| v.ebv()) == Ok(true)
}

/// [`accepts_with`] for expressions without EXISTS; an EXISTS node rejects.
pub fn accepts(expr: &FilterExpr, mu: &SolutionMapping) -> bool {
    accepts_with(expr, mu, &mut |_, _| false)
}

/// Total order for ORDER BY: unbound < blank < IRI < literal; numeric
/// literals precede other literals and compare by value, ties by term order.
pub fn order_cmp(a: Option<&Term>, b: Option<&Term>) -> Ordering {
    let rank = |t: Option<&Term>| match t {
        None => 0,
        Some(t) => match t.kind() {
            TermKind::Blank => 1,
            TermKind::Iri => 2,
            TermKind::Literal if t.is_numeric() => 3,
            TermKind::Literal => 4,
        },
    };
    let (ra, rb) = (rank(a), rank(b));
    if ra != rb {
        return ra.cmp(&rb);
    }
    match (a, b) {
        (Some(x), Some(y)) => {
            if ra == 3 {
                let (vx, vy) = (x.numeric_value().unwrap_or(0.0), y.numeric_value().unwrap_or(0.0));
                vx.partial_cmp(&vy).unwrap_or(Ordering::Equal).then_with(|| x.cmp(y))
            } else {
                x.cmp(y)
            }
        }
        _ => Ordering::Equal,
    }
}

fn is_whole(v: f64) -> bool {
    v.abs() < 9.0e15 && (v as i64) as f64 == v
}

/// Builds a numeric literal of the given promotion rank (0 integer,
/// 1 decimal, 2 and above double).
pub fn numeric_term(value: f64, rank: u8) -> Term {
    match rank {
        0 if is_whole(value) => Term::typed_literal(format!("{}", value as i64), XSD_INTEGER),
        0 | 1 => {
            let text = if is_whole(value) {
                format!("{}.0", value as i64)
            } else {
                value.to_string()
            };
            Term::typed_literal(text, XSD_DECIMAL)
        }
        _ => Term::typed_literal(value.to_string(), XSD_DOUBLE),
    }
}
