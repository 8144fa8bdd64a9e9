//! Variables, triple patterns and solution mappings.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use crate::term::{Term, Triple};

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Variable(pub String);

impl Variable {
    pub fn new(name: impl Into<String>) -> Self {
        Variable(name.into())
    }

    pub fn name(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for Variable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "?{}", self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum PatternTerm {
    Var(Variable),
    Term(Term),
}

impl PatternTerm {
    pub fn var(name: &str) -> Self {
        PatternTerm::Var(Variable::new(name))
    }

    pub fn as_var(&self) -> Option<&Variable> {
        match self {
            PatternTerm::Var(v) => Some(v),
            PatternTerm::Term(_) => None,
        }
    }

    pub fn as_term(&self) -> Option<&Term> {
        match self {
            PatternTerm::Term(t) => Some(t),
            PatternTerm::Var(_) => None,
        }
    }
}

impl From<Term> for PatternTerm {
    fn from(t: Term) -> Self {
        PatternTerm::Term(t)
    }
}

impl From<Variable> for PatternTerm {
    fn from(v: Variable) -> Self {
        PatternTerm::Var(v)
    }
}

impl fmt::Display for PatternTerm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PatternTerm::Var(v) => v.fmt(f),
            PatternTerm::Term(t) => t.fmt(f),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct TriplePattern {
    pub subject: PatternTerm,
    pub predicate: PatternTerm,
    pub object: PatternTerm,
}

impl TriplePattern {
    pub fn new(
        subject: impl Into<PatternTerm>,
        predicate: impl Into<PatternTerm>,
        object: impl Into<PatternTerm>,
    ) -> Self {
        TriplePattern { subject: subject.into(), predicate: predicate.into(), object: object.into() }
    }

    pub fn positions(&self) -> [&PatternTerm; 3] {
        [&self.subject, &self.predicate, &self.object]
    }

    /// Variables in subject, predicate, object order, without duplicates.
    pub fn variables(&self) -> Vec<&Variable> {
        let mut out: Vec<&Variable> = Vec::with_capacity(3);
        for v in self.positions().into_iter().filter_map(PatternTerm::as_var) {
            if !out.contains(&v) {
                out.push(v);
            }
        }
        out
    }

    /// Matches a concrete triple, returning the induced bindings.
    pub fn matches(&self, triple: &Triple) -> Option<SolutionMapping> {
        let mut mu = SolutionMapping::new();
        for (slot, term) in self.positions().into_iter().zip([&triple.subject, &triple.predicate, &triple.object]) {
            match slot {
                PatternTerm::Term(t) if t != term => return None,
                PatternTerm::Term(_) => {}
                PatternTerm::Var(v) => match mu.get(v) {
                    Some(prev) if prev != term => return None,
                    Some(_) => {}
                    None => {
                        mu.insert(v.clone(), term.clone());
                    }
                },
            }
        }
        Some(mu)
    }

    /// Replaces variables bound in `mu` with their terms.
    pub fn substitute(&self, mu: &SolutionMapping) -> TriplePattern {
        let sub = |p: &PatternTerm| match p {
            PatternTerm::Var(v) => mu.get(v).map_or_else(|| p.clone(), |t| PatternTerm::Term(t.clone())),
            PatternTerm::Term(_) => p.clone(),
        };
        TriplePattern { subject: sub(&self.subject), predicate: sub(&self.predicate), object: sub(&self.object) }
    }
}

impl fmt::Display for TriplePattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {} {}", self.subject, self.predicate, self.object)
    }
}

/// A partial assignment of variables to terms.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct SolutionMapping(BTreeMap<Variable, Term>);

impl SolutionMapping {
    pub fn new() -> Self {
        SolutionMapping(BTreeMap::new())
    }

    pub fn get(&self, var: &Variable) -> Option<&Term> {
        self.0.get(var)
    }

    pub fn get_named(&self, name: &str) -> Option<&Term> {
        self.0.get(&Variable::new(name))
    }

    pub fn insert(&mut self, var: Variable, term: Term) -> Option<Term> {
        self.0.insert(var, term)
    }

    pub fn remove(&mut self, var: &Variable) -> Option<Term> {
        self.0.remove(var)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&Variable, &Term)> {
        self.0.iter()
    }

    pub fn contains(&self, var: &Variable) -> bool {
        self.0.contains_key(var)
    }

    pub fn domain(&self) -> impl Iterator<Item = &Variable> {
        self.0.keys()
    }

    /// True when the mappings agree on every shared variable.
    pub fn compatible(&self, other: &SolutionMapping) -> bool {
        let (small, large) = if self.len() <= other.len() { (self, other) } else { (other, self) };
        small.iter().all(|(v, t)| large.get(v).is_none_or(|u| u == t))
    }

    pub fn shares_variable(&self, other: &SolutionMapping) -> bool {
        self.domain().any(|v| other.contains(v))
    }

    /// Union of two mappings; callers check compatibility first.
    pub fn merge(&self, other: &SolutionMapping) -> SolutionMapping {
        let mut out = self.clone();
        for (v, t) in other.iter() {
            out.0.entry(v.clone()).or_insert_with(|| t.clone());
        }
        out
    }

    pub fn project<'a>(&self, vars: impl IntoIterator<Item = &'a Variable>) -> SolutionMapping {
        let mut out = SolutionMapping::new();
        for v in vars {
            if let Some(t) = self.get(v) {
                out.insert(v.clone(), t.clone());
            }
        }
        out
    }
}

impl FromIterator<(Variable, Term)> for SolutionMapping {
    fn from_iter<I: IntoIterator<Item = (Variable, Term)>>(iter: I) -> Self {
        SolutionMapping(iter.into_iter().collect())
    }
}

impl fmt::Display for SolutionMapping {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("{")?;
        for (i, (v, t)) in self.iter().enumerate() {
            if i > 0 {
                f.write_str(", ")?;
            }
            write!(f, "{v} -> {t}")?;
        }
        f.write_str("}")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn repeated_variable_must_agree() {
        let tp = TriplePattern::new(PatternTerm::var("x"), Term::iri("p"), PatternTerm::var("x"));
        assert!(tp.matches(&Triple::new(Term::iri("a"), Term::iri("p"), Term::iri("a"))).is_some());
        assert!(tp.matches(&Triple::new(Term::iri("a"), Term::iri("p"), Term::iri("b"))).is_none());
    }

    #[test]
    fn compatibility_and_merge() {
        let a: SolutionMapping = [(Variable::new("x"), Term::iri("1"))].into_iter().collect();
        let b: SolutionMapping =
            [(Variable::new("x"), Term::iri("1")), (Variable::new("y"), Term::iri("2"))].into_iter().collect();
        let c: SolutionMapping = [(Variable::new("x"), Term::iri("9"))].into_iter().collect();
        assert!(a.compatible(&b));
        assert!(!a.compatible(&c));
        assert_eq!(a.merge(&b), b);
    }
}
