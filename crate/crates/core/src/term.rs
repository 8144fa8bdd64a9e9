//! RDF terms and triples.

use alloc::string::String;
use core::cmp::Ordering;
use core::fmt;

pub const XSD: &str = "http://www.w3.org/2001/XMLSchema#";
pub const XSD_STRING: &str = "http://www.w3.org/2001/XMLSchema#string";
pub const XSD_INTEGER: &str = "http://www.w3.org/2001/XMLSchema#integer";
pub const XSD_DECIMAL: &str = "http://www.w3.org/2001/XMLSchema#decimal";
pub const XSD_DOUBLE: &str = "http://www.w3.org/2001/XMLSchema#double";
pub const XSD_BOOLEAN: &str = "http://www.w3.org/2001/XMLSchema#boolean";
pub const RDF_TYPE: &str = "http://www.w3.org/1999/02/22-rdf-syntax-ns#type";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum TermKind {
    Iri,
    Blank,
    Literal,
}

impl TermKind {
    pub fn as_str(self) -> &'static str {
        match self {
            TermKind::Iri => "iri",
            TermKind::Blank => "blank",
            TermKind::Literal => "literal",
        }
    }
}

/// An RDF term.
///
/// Equality is structural: two literals with the same value but different
/// lexical forms are different terms.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Term {
    kind: TermKind,
    lexical: String,
    datatype: Option<String>,
    language: Option<String>,
}

impl Term {
    pub fn iri(iri: impl Into<String>) -> Self {
        Term { kind: TermKind::Iri, lexical: iri.into(), datatype: None, language: None }
    }

    pub fn blank(label: impl Into<String>) -> Self {
        Term { kind: TermKind::Blank, lexical: label.into(), datatype: None, language: None }
    }

    pub fn literal(lexical: impl Into<String>) -> Self {
        Term { kind: TermKind::Literal, lexical: lexical.into(), datatype: None, language: None }
    }

    pub fn typed_literal(lexical: impl Into<String>, datatype: impl Into<String>) -> Self {
        Term {
            kind: TermKind::Literal,
            lexical: lexical.into(),
            datatype: Some(datatype.into()),
            language: None,
        }
    }

    pub fn lang_literal(lexical: impl Into<String>, language: impl Into<String>) -> Self {
        Term {
            kind: TermKind::Literal,
            lexical: lexical.into(),
            datatype: None,
            language: Some(language.into()),
        }
    }

    pub fn integer(value: i64) -> Self {
        Term::typed_literal(alloc::format!("{value}"), XSD_INTEGER)
    }

    pub fn kind(&self) -> TermKind {
        self.kind
    }

    pub fn lexical(&self) -> &str {
        &self.lexical
    }

    pub fn datatype(&self) -> Option<&str> {
        self.datatype.as_deref()
    }

    pub fn language(&self) -> Option<&str> {
        self.language.as_deref()
    }

    pub fn is_iri(&self) -> bool {
        self.kind == TermKind::Iri
    }

    pub fn is_literal(&self) -> bool {
        self.kind == TermKind::Literal
    }

    /// Numeric value of a literal with a numeric XSD datatype.
    ///
    /// Returns `None` for non-numeric terms and for numeric literals whose
    /// lexical form does not parse.
    pub fn numeric_value(&self) -> Option<f64> {
        numeric_rank(self.datatype()?)?;
        self.lexical.trim().parse::<f64>().ok().filter(|v| !v.is_nan())
    }

    pub fn is_numeric(&self) -> bool {
        self.numeric_value().is_some()
    }
}

/// Promotion rank of numeric XSD datatypes: integer < decimal < float < double.
pub fn numeric_rank(datatype: &str) -> Option<u8> {
    let local = datatype.strip_prefix(XSD)?;
    match local {
        "integer" | "int" | "long" | "short" | "byte" | "nonNegativeInteger"
        | "positiveInteger" | "nonPositiveInteger" | "negativeInteger" | "unsignedLong"
        | "unsignedInt" | "unsignedShort" | "unsignedByte" => Some(0),
        "decimal" => Some(1),
        "float" => Some(2),
        "double" => Some(3),
        _ => None,
    }
}

/// Storage order: kind (iri < blank < literal), lexical bytes, datatype, language.
impl Ord for Term {
    fn cmp(&self, other: &Self) -> Ordering {
        self.kind
            .cmp(&other.kind)
            .then_with(|| self.lexical.as_bytes().cmp(other.lexical.as_bytes()))
            .then_with(|| self.datatype.cmp(&other.datatype))
            .then_with(|| self.language.cmp(&other.language))
    }
}

impl PartialOrd for Term {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// N-Triples / SPARQL surface syntax.
impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.kind {
            TermKind::Iri => write!(f, "<{}>", self.lexical),
            TermKind::Blank => write!(f, "_:{}", self.lexical),
            TermKind::Literal => {
                f.write_str("\"")?;
                write_escaped(f, &self.lexical)?;
                f.write_str("\"")?;
                if let Some(lang) = &self.language {
                    write!(f, "@{lang}")
                } else if let Some(dt) = &self.datatype {
                    write!(f, "^^<{dt}>")
                } else {
                    Ok(())
                }
            }
        }
    }
}

fn write_escaped(f: &mut fmt::Formatter<'_>, s: &str) -> fmt::Result {
    for c in s.chars() {
        match c {
            '"' => f.write_str("\\\"")?,
            '\\' => f.write_str("\\\\")?,
            '\n' => f.write_str("\\n")?,
            '\r' => f.write_str("\\r")?,
            '\t' => f.write_str("\\t")?,
            c => fmt::Write::write_char(f, c)?,
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Triple {
    pub subject: Term,
    pub predicate: Term,
    pub object: Term,
}

impl Triple {
    pub fn new(subject: Term, predicate: Term, object: Term) -> Self {
        Triple { subject, predicate, object }
    }

    /// Subject must not be a literal, predicate must be an IRI.
    pub fn is_well_formed(&self) -> bool {
        !self.subject.is_literal() && self.predicate.is_iri()
    }
}

impl fmt::Display for Triple {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {} {} .", self.subject, self.predicate, self.object)
    }
}
