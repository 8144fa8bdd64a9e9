//! Recursive-descent parser for the supported SELECT subset.

use alloc::boxed::Box;
use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;

use crate::algebra::{AggFunc, Aggregate, CmpOp, FilterExpr, OrderKey, PlanNode};
use crate::pattern::{PatternTerm, TriplePattern, Variable};
use crate::term::{Term, RDF_TYPE, XSD_BOOLEAN, XSD_DECIMAL, XSD_DOUBLE, XSD_INTEGER};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ParseError {
    Syntax { position: usize, message: String },
    Unsupported { feature: String },
}

impl fmt::Display for ParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ParseError::Syntax { position, message } => write!(f, "syntax error at offset {position}: {message}"),
            ParseError::Unsupported { feature } => write!(f, "unsupported feature: {feature}"),
        }
    }
}

type Result<T> = core::result::Result<T, ParseError>;

/// Parses a SELECT query into its algebra tree.
pub fn parse(query: &str) -> Result<PlanNode> {
    let mut p = Parser { src: query, pos: 0, prefixes: BTreeMap::new() };
    let plan = p.query()?;
    p.skip_ws();
    if !p.at_end() {
        return Err(p.err("unexpected trailing input"));
    }
    Ok(plan)
}

struct Parser<'a> {
    src: &'a str,
    pos: usize,
    prefixes: BTreeMap<String, String>,
}

enum SelectItem {
    Var(Variable),
    Agg(Aggregate),
}

enum Element {
    Triples(Vec<TriplePattern>),
    Group(PlanNode),
    Union(PlanNode),
    Optional(PlanNode),
    Minus(PlanNode),
    Service(String, PlanNode),
    Filter(FilterExpr),
}

impl<'a> Parser<'a> {
    fn rest(&self) -> &'a str {
        &self.src[self.pos..]
    }

    fn at_end(&self) -> bool {
        self.pos >= self.src.len()
    }

    fn peek(&self) -> Option<char> {
        self.rest().chars().next()
    }

    fn err(&self, message: impl Into<String>) -> ParseError {
        ParseError::Syntax { position: self.pos, message: message.into() }
    }

    fn unsupported(feature: &str) -> ParseError {
        ParseError::Unsupported { feature: feature.into() }
    }

    fn skip_ws(&mut self) {
        loop {
            let trimmed = self.rest().trim_start();
            self.pos = self.src.len() - trimmed.len();
            if trimmed.starts_with('#') {
                match trimmed.find('\n') {
                    Some(i) => self.pos += i + 1,
                    None => self.pos = self.src.len(),
                }
            } else {
                return;
            }
        }
    }

    fn eat(&mut self, token: &str) -> bool {
        self.skip_ws();
        if self.rest().starts_with(token) {
            self.pos += token.len();
            true
        } else {
            false
        }
    }

    fn expect(&mut self, token: &str) -> Result<()> {
        if self.eat(token) {
            Ok(())
        } else {
            Err(self.err(format!("expected '{token}'")))
        }
    }

    /// Case-insensitive keyword followed by a non-identifier character.
    fn peek_keyword(&mut self, kw: &str) -> bool {
        self.skip_ws();
        let r = self.rest();
        r.len() >= kw.len()
            && r[..kw.len()].eq_ignore_ascii_case(kw)
            && !r[kw.len()..].chars().next().is_some_and(|c| c.is_alphanumeric() || c == '_' || c == ':')
    }

    fn eat_keyword(&mut self, kw: &str) -> bool {
        if self.peek_keyword(kw) {
            self.pos += kw.len();
            true
        } else {
            false
        }
    }

    fn query(&mut self) -> Result<PlanNode> {
        loop {
            if self.eat_keyword("PREFIX") {
                self.skip_ws();
                let name = self.pname_prefix()?;
                self.skip_ws();
                let iri = self.iri_ref()?;
                self.prefixes.insert(name, iri);
            } else if self.peek_keyword("BASE") {
                return Err(Self::unsupported("BASE"));
            } else {
                break;
            }
        }
        for form in ["CONSTRUCT", "ASK", "DESCRIBE", "INSERT", "DELETE", "LOAD", "CLEAR"] {
            if self.peek_keyword(form) {
                return Err(Self::unsupported(form));
            }
        }
        if !self.eat_keyword("SELECT") {
            return Err(self.err("expected SELECT"));
        }
        let distinct = self.eat_keyword("DISTINCT");
        if self.peek_keyword("REDUCED") {
            return Err(Self::unsupported("REDUCED"));
        }
        let mut items = Vec::new();
        let star = self.eat("*");
        if !star {
            loop {
                self.skip_ws();
                match self.peek() {
                    Some('?' | '$') => items.push(SelectItem::Var(self.variable()?)),
                    Some('(') => {
                        self.pos += 1;
                        items.push(SelectItem::Agg(self.aggregate()?));
                    }
                    _ => break,
                }
            }
            if items.is_empty() {
                return Err(self.err("expected projection variables or '*'"));
            }
        }
        if self.peek_keyword("FROM") {
            return Err(Self::unsupported("FROM (dataset clauses)"));
        }
        self.eat_keyword("WHERE");
        let mut plan = self.group()?;

        let mut group_keys = None;
        if self.eat_keyword("GROUP") {
            if !self.eat_keyword("BY") {
                return Err(self.err("expected BY"));
            }
            let mut keys = Vec::new();
            while matches!(self.peek_ws(), Some('?' | '$')) {
                keys.push(self.variable()?);
            }
            if keys.is_empty() {
                return Err(self.err("expected GROUP BY variables"));
            }
            group_keys = Some(keys);
        }
        if self.peek_keyword("HAVING") {
            return Err(Self::unsupported("HAVING"));
        }
        let mut order = Vec::new();
        if self.eat_keyword("ORDER") {
            if !self.eat_keyword("BY") {
                return Err(self.err("expected BY"));
            }
            loop {
                if self.eat_keyword("ASC") {
                    order.push(self.order_key(false)?);
                } else if self.eat_keyword("DESC") {
                    order.push(self.order_key(true)?);
                } else if matches!(self.peek_ws(), Some('?' | '$')) {
                    order.push(OrderKey { var: self.variable()?, descending: false });
                } else {
                    break;
                }
            }
            if order.is_empty() {
                return Err(self.err("expected ORDER BY conditions"));
            }
        }
        for kw in ["LIMIT", "OFFSET", "VALUES"] {
            if self.peek_keyword(kw) {
                return Err(Self::unsupported(kw));
            }
        }

        let aggregates: Vec<Aggregate> = items
            .iter()
            .filter_map(|i| match i {
                SelectItem::Agg(a) => Some(a.clone()),
                SelectItem::Var(_) => None,
            })
            .collect();
        if group_keys.is_some() || !aggregates.is_empty() {
            if star {
                return Err(self.err("SELECT * cannot be combined with grouping"));
            }
            let keys = group_keys.unwrap_or_default();
            for item in &items {
                if let SelectItem::Var(v) = item {
                    if !keys.contains(v) {
                        return Err(self.err(format!("variable {v} is projected but not grouped")));
                    }
                }
            }
            plan = PlanNode::Group(keys, aggregates, Box::new(plan));
        }
        if !order.is_empty() {
            plan = PlanNode::OrderBy(order, Box::new(plan));
        }
        if !star {
            let vars = items
                .into_iter()
                .map(|i| match i {
                    SelectItem::Var(v) => v,
                    SelectItem::Agg(a) => a.output,
                })
                .collect();
            plan = PlanNode::project(vars, plan);
        }
        if distinct {
            plan = PlanNode::Distinct(Box::new(plan));
        }
        Ok(plan)
    }

    fn peek_ws(&mut self) -> Option<char> {
        self.skip_ws();
        self.peek()
    }

    fn order_key(&mut self, descending: bool) -> Result<OrderKey> {
        self.expect("(")?;
        self.skip_ws();
        let var = self.variable()?;
        self.expect(")")?;
        Ok(OrderKey { var, descending })
    }

    fn aggregate(&mut self) -> Result<Aggregate> {
        self.skip_ws();
        let func = if self.eat_keyword("COUNT") {
            AggFunc::Count
        } else if self.eat_keyword("SUM") {
            AggFunc::Sum
        } else if self.eat_keyword("AVG") {
            AggFunc::Avg
        } else if self.eat_keyword("MIN") {
            AggFunc::Min
        } else if self.eat_keyword("MAX") {
            AggFunc::Max
        } else if self.peek_keyword("SAMPLE") || self.peek_keyword("GROUP_CONCAT") {
            return Err(Self::unsupported("SAMPLE / GROUP_CONCAT"));
        } else {
            return Err(Self::unsupported("projection expressions"));
        };
        self.expect("(")?;
        if self.peek_keyword("DISTINCT") {
            return Err(Self::unsupported("DISTINCT inside aggregates"));
        }
        let arg = if func == AggFunc::Count && self.eat("*") {
            None
        } else {
            self.skip_ws();
            if !matches!(self.peek(), Some('?' | '$')) {
                return Err(Self::unsupported("aggregate over expressions"));
            }
            Some(self.variable()?)
        };
        self.expect(")")?;
        if !self.eat_keyword("AS") {
            return Err(self.err("expected AS"));
        }
        self.skip_ws();
        let output = self.variable()?;
        self.expect(")")?;
        Ok(Aggregate { func, arg, output })
    }

    fn group(&mut self) -> Result<PlanNode> {
        self.expect("{")?;
        if self.peek_keyword("SELECT") {
            return Err(Self::unsupported("subqueries"));
        }
        let mut elements = Vec::new();
        loop {
            self.skip_ws();
            match self.peek() {
                Some('}') => {
                    self.pos += 1;
                    break;
                }
                None => return Err(self.err("unterminated group")),
                Some('{') => {
                    let first = self.group()?;
                    if self.peek_keyword("UNION") {
                        let mut u = first;
                        while self.eat_keyword("UNION") {
                            let next = self.group()?;
                            u = PlanNode::union(u, next);
                        }
                        elements.push(Element::Union(u));
                    } else {
                        elements.push(Element::Group(first));
                    }
                }
                Some('.') => {
                    self.pos += 1;
                }
                _ => {
                    if self.eat_keyword("OPTIONAL") {
                        elements.push(Element::Optional(self.group()?));
                    } else if self.eat_keyword("MINUS") {
                        elements.push(Element::Minus(self.group()?));
                    } else if self.eat_keyword("FILTER") {
                        elements.push(Element::Filter(self.filter_constraint()?));
                    } else if self.eat_keyword("SERVICE") {
                        if self.peek_keyword("SILENT") {
                            return Err(Self::unsupported("SERVICE SILENT"));
                        }
                        self.skip_ws();
                        let endpoint = self.iri_ref()?;
                        let inner = self.group()?;
                        if let Some(node) = inner.first_client_node() {
                            return Err(Self::unsupported(&format!("{} inside SERVICE", node.name())));
                        }
                        elements.push(Element::Service(endpoint, inner));
                    } else {
                        for kw in ["GRAPH", "BIND", "VALUES"] {
                            if self.peek_keyword(kw) {
                                let feature = if kw == "GRAPH" { "named graphs (GRAPH)" } else { kw };
                                return Err(Self::unsupported(feature));
                            }
                        }
                        elements.push(Element::Triples(self.triples_block()?));
                    }
                }
            }
        }
        self.translate_group(elements)
    }

    fn translate_group(&self, elements: Vec<Element>) -> Result<PlanNode> {
        let mut acc: Option<PlanNode> = None;
        let mut filters: Vec<FilterExpr> = Vec::new();
        let join = |acc: Option<PlanNode>, p: PlanNode| match acc {
            Some(a) => PlanNode::join(a, p),
            None => p,
        };
        for el in elements {
            match el {
                Element::Triples(tps) => {
                    for tp in tps {
                        acc = Some(join(acc, PlanNode::Scan(tp)));
                    }
                }
                Element::Group(p) | Element::Union(p) => acc = Some(join(acc, p)),
                Element::Service(ep, p) => acc = Some(join(acc, PlanNode::Service(ep, Box::new(p)))),
                Element::Filter(e) => filters.push(e),
                Element::Optional(p) => {
                    let left = acc.take().ok_or_else(|| Self::unsupported("OPTIONAL without a preceding pattern"))?;
                    let (right, cond) = match p {
                        PlanNode::Filter(e, inner) => (*inner, Some(e)),
                        other => (other, None),
                    };
                    acc = Some(PlanNode::LeftJoin(Box::new(left), Box::new(right), cond));
                }
                Element::Minus(p) => {
                    let left = acc.take().ok_or_else(|| Self::unsupported("MINUS without a preceding pattern"))?;
                    acc = Some(PlanNode::Minus(Box::new(left), Box::new(p)));
                }
            }
        }
        let mut plan = acc.ok_or_else(|| Self::unsupported("empty group pattern"))?;
        let mut conj: Option<FilterExpr> = None;
        for f in filters {
            conj = Some(match conj {
                Some(c) => FilterExpr::and(c, f),
                None => f,
            });
        }
        if let Some(e) = conj {
            plan = PlanNode::filter(e, plan);
        }
        Ok(plan)
    }

    fn triples_block(&mut self) -> Result<Vec<TriplePattern>> {
        let mut out = Vec::new();
        let subject = self.pattern_term(true)?;
        loop {
            self.skip_ws();
            let predicate = if self.peek_keyword("a") {
                self.pos += 1;
                PatternTerm::Term(Term::iri(RDF_TYPE))
            } else {
                if matches!(self.peek(), Some('^' | '!' | '(')) {
                    return Err(Self::unsupported("property paths"));
                }
                let p = self.pattern_term(false)?;
                if let PatternTerm::Term(t) = &p {
                    if !t.is_iri() {
                        return Err(self.err("predicate must be an IRI or a variable"));
                    }
                }
                p
            };
            if matches!(self.peek(), Some('/' | '|' | '*' | '+' | '?'))
                && !self.rest().starts_with("? ")
                && !self.rest()[1..].starts_with(|c: char| c.is_alphanumeric() || c == '_')
            {
                return Err(Self::unsupported("property paths"));
            }
            if matches!(self.peek(), Some('/' | '|')) {
                return Err(Self::unsupported("property paths"));
            }
            loop {
                let object = self.pattern_term(true)?;
                out.push(TriplePattern { subject: subject.clone(), predicate: predicate.clone(), object });
                if !self.eat(",") {
                    break;
                }
            }
            if self.eat(";") {
                self.skip_ws();
                if matches!(self.peek(), Some('.' | '}')) {
                    break;
                }
                continue;
            }
            break;
        }
        Ok(out)
    }

    fn pattern_term(&mut self, allow_literal: bool) -> Result<PatternTerm> {
        self.skip_ws();
        match self.peek() {
            Some('?' | '$') => Ok(PatternTerm::Var(self.variable()?)),
            Some('[') => Err(Self::unsupported("anonymous blank nodes")),
            Some('(') => Err(Self::unsupported("RDF collections")),
            _ => {
                let t = self.term()?;
                if !allow_literal && t.is_literal() {
                    return Err(self.err("literal not allowed here"));
                }
                Ok(PatternTerm::Term(t))
            }
        }
    }

    fn variable(&mut self) -> Result<Variable> {
        match self.peek() {
            Some('?' | '$') => self.pos += 1,
            _ => return Err(self.err("expected variable")),
        }
        let name = self.name_chars();
        if name.is_empty() {
            return Err(self.err("empty variable name"));
        }
        Ok(Variable::new(name))
    }

    fn name_chars(&mut self) -> String {
        let start = self.pos;
        while let Some(c) = self.peek() {
            if c.is_alphanumeric() || c == '_' {
                self.pos += c.len_utf8();
            } else {
                break;
            }
        }
        self.src[start..self.pos].to_string()
    }

    fn pname_prefix(&mut self) -> Result<String> {
        let name = self.name_chars();
        if self.peek() != Some(':') {
            return Err(self.err("expected prefix name followed by ':'"));
        }
        self.pos += 1;
        Ok(name)
    }

    fn iri_ref(&mut self) -> Result<String> {
        if self.peek() != Some('<') {
            return Err(self.err("expected IRI"));
        }
        let end = self.rest().find('>').ok_or_else(|| self.err("unterminated IRI"))?;
        let iri = self.rest()[1..end].to_string();
        if iri.contains([' ', '\n', '"', '{', '}']) {
            return Err(self.err("invalid character in IRI"));
        }
        self.pos += end + 1;
        Ok(iri)
    }

    /// IRI, prefixed name, blank node label, literal, number or boolean.
    fn term(&mut self) -> Result<Term> {
        self.skip_ws();
        match self.peek() {
            Some('<') => Ok(Term::iri(self.iri_ref()?)),
            Some('"') | Some('\'') => self.literal(),
            Some('_') if self.rest().starts_with("_:") => {
                self.pos += 2;
                let label = self.name_chars();
                if label.is_empty() {
                    return Err(self.err("empty blank node label"));
                }
                Ok(Term::blank(label))
            }
            Some(c) if c.is_ascii_digit() || c == '-' || c == '+' || c == '.' => self.number(),
            Some(_) if self.peek_keyword("true") => {
                self.pos += 4;
                Ok(Term::typed_literal("true", XSD_BOOLEAN))
            }
            Some(_) if self.peek_keyword("false") => {
                self.pos += 5;
                Ok(Term::typed_literal("false", XSD_BOOLEAN))
            }
            Some(c) if c.is_alphabetic() || c == ':' => {
                let start = self.pos;
                let prefix = self.name_chars();
                if self.peek() != Some(':') {
                    self.pos = start;
                    return Err(self.err(format!("unexpected token '{prefix}'")));
                }
                self.pos += 1;
                let local_start = self.pos;
                while let Some(c) = self.peek() {
                    if c.is_alphanumeric() || matches!(c, '_' | '-' | '.') {
                        self.pos += c.len_utf8();
                    } else {
                        break;
                    }
                }
                while self.pos > local_start && self.src[..self.pos].ends_with('.') {
                    self.pos -= 1;
                }
                let local = &self.src[local_start..self.pos];
                let ns = self
                    .prefixes
                    .get(&prefix)
                    .ok_or_else(|| ParseError::Syntax { position: start, message: format!("undeclared prefix '{prefix}:'") })?;
                Ok(Term::iri(format!("{ns}{local}")))
            }
            _ => Err(self.err("expected a term")),
        }
    }

    fn literal(&mut self) -> Result<Term> {
        let quote = self.peek().unwrap_or('"');
        self.pos += 1;
        let mut lexical = String::new();
        loop {
            let c = self.peek().ok_or_else(|| self.err("unterminated literal"))?;
            self.pos += c.len_utf8();
            match c {
                c if c == quote => break,
                '\\' => {
                    let e = self.peek().ok_or_else(|| self.err("unterminated escape"))?;
                    self.pos += e.len_utf8();
                    lexical.push(match e {
                        't' => '\t',
                        'n' => '\n',
                        'r' => '\r',
                        'b' => '\u{8}',
                        'f' => '\u{c}',
                        '"' => '"',
                        '\'' => '\'',
                        '\\' => '\\',
                        _ => return Err(self.err("invalid escape")),
                    });
                }
                '\n' => return Err(self.err("newline in literal")),
                c => lexical.push(c),
            }
        }
        if self.peek() == Some('@') {
            self.pos += 1;
            let start = self.pos;
            while matches!(self.peek(), Some(c) if c.is_ascii_alphanumeric() || c == '-') {
                self.pos += 1;
            }
            if start == self.pos {
                return Err(self.err("empty language tag"));
            }
            return Ok(Term::lang_literal(lexical, &self.src[start..self.pos]));
        }
        if self.rest().starts_with("^^") {
            self.pos += 2;
            let dt = self.term()?;
            if !dt.is_iri() {
                return Err(self.err("datatype must be an IRI"));
            }
            return Ok(Term::typed_literal(lexical, dt.lexical()));
        }
        Ok(Term::literal(lexical))
    }

    fn number(&mut self) -> Result<Term> {
        let start = self.pos;
        if matches!(self.peek(), Some('+' | '-')) {
            self.pos += 1;
        }
        let digits = |p: &mut Self| {
            let s = p.pos;
            while matches!(p.peek(), Some(c) if c.is_ascii_digit()) {
                p.pos += 1;
            }
            p.pos - s
        };
        let int_digits = digits(self);
        let mut datatype = XSD_INTEGER;
        if self.peek() == Some('.') && self.rest()[1..].starts_with(|c: char| c.is_ascii_digit()) {
            self.pos += 1;
            digits(self);
            datatype = XSD_DECIMAL;
        } else if int_digits == 0 {
            self.pos = start;
            return Err(self.err("expected a number"));
        }
        if matches!(self.peek(), Some('e' | 'E')) {
            self.pos += 1;
            if matches!(self.peek(), Some('+' | '-')) {
                self.pos += 1;
            }
            if digits(self) == 0 {
                return Err(self.err("malformed exponent"));
            }
            datatype = XSD_DOUBLE;
        }
        Ok(Term::typed_literal(&self.src[start..self.pos], datatype))
    }

    fn filter_constraint(&mut self) -> Result<FilterExpr> {
        self.skip_ws();
        if self.eat_keyword("EXISTS") {
            return Ok(FilterExpr::Exists(Box::new(self.exists_group()?)));
        }
        if self.eat_keyword("NOT") {
            if !self.eat_keyword("EXISTS") {
                return Err(self.err("expected EXISTS after NOT"));
            }
            return Ok(FilterExpr::NotExists(Box::new(self.exists_group()?)));
        }
        if self.peek() != Some('(') {
            let start = self.pos;
            let name = self.name_chars();
            if !name.is_empty() {
                return Err(Self::unsupported(&format!("function {name}")));
            }
            self.pos = start;
            return Err(self.err("expected '(' after FILTER"));
        }
        self.pos += 1;
        let e = self.or_expr()?;
        self.expect(")")?;
        Ok(e)
    }

    fn exists_group(&mut self) -> Result<PlanNode> {
        let p = self.group()?;
        if let Some(node) = p.first_client_node() {
            return Err(Self::unsupported(&format!("{} inside EXISTS", node.name())));
        }
        Ok(p)
    }

    fn or_expr(&mut self) -> Result<FilterExpr> {
        let mut e = self.and_expr()?;
        while self.eat("||") {
            e = FilterExpr::or(e, self.and_expr()?);
        }
        Ok(e)
    }

    fn and_expr(&mut self) -> Result<FilterExpr> {
        let mut e = self.rel_expr()?;
        while self.eat("&&") {
            e = FilterExpr::and(e, self.rel_expr()?);
        }
        Ok(e)
    }

    fn rel_expr(&mut self) -> Result<FilterExpr> {
        let a = self.unary()?;
        self.skip_ws();
        let ops = [("!=", CmpOp::Ne), ("<=", CmpOp::Le), (">=", CmpOp::Ge), ("=", CmpOp::Eq), ("<", CmpOp::Lt), (">", CmpOp::Gt)];
        for (sym, op) in ops {
            if self.rest().starts_with(sym) {
                // `<` may open an IRI operand
                if sym == "<" && self.looks_like_iri() {
                    break;
                }
                self.pos += sym.len();
                let b = self.unary()?;
                return Ok(FilterExpr::cmp(op, a, b));
            }
        }
        if matches!(self.peek(), Some('+' | '-' | '*' | '/')) {
            return Err(Self::unsupported("arithmetic expressions"));
        }
        if self.peek_keyword("IN") || self.peek_keyword("NOT") {
            return Err(Self::unsupported("IN / NOT IN"));
        }
        Ok(a)
    }

    fn looks_like_iri(&self) -> bool {
        let r = &self.rest()[1..];
        match r.find('>') {
            Some(end) => {
                let body = &r[..end];
                !body.is_empty() && !body.contains([' ', '?', '$', '(', ')', '"'])
            }
            None => false,
        }
    }

    fn unary(&mut self) -> Result<FilterExpr> {
        self.skip_ws();
        if self.rest().starts_with('!') && !self.rest().starts_with("!=") {
            self.pos += 1;
            return Ok(FilterExpr::Not(Box::new(self.unary()?)));
        }
        match self.peek() {
            Some('(') => {
                self.pos += 1;
                let e = self.or_expr()?;
                self.expect(")")?;
                Ok(e)
            }
            Some('?' | '$') => Ok(FilterExpr::Var(self.variable()?)),
            _ => {
                if self.eat_keyword("EXISTS") {
                    return Ok(FilterExpr::Exists(Box::new(self.exists_group()?)));
                }
                if self.eat_keyword("NOT") {
                    if !self.eat_keyword("EXISTS") {
                        return Err(self.err("expected EXISTS after NOT"));
                    }
                    return Ok(FilterExpr::NotExists(Box::new(self.exists_group()?)));
                }
                let start = self.pos;
                let name = self.name_chars();
                if !name.is_empty() && self.peek_ws() == Some('(') {
                    return Err(Self::unsupported(&format!("function {name}")));
                }
                self.pos = start;
                Ok(FilterExpr::Const(self.term()?))
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn v(n: &str) -> PatternTerm {
        PatternTerm::var(n)
    }

    fn iri(s: &str) -> PatternTerm {
        PatternTerm::Term(Term::iri(s))
    }

    #[test]
    fn single_pattern() {
        let p = parse("SELECT ?v WHERE { ?v <p> <o> }").unwrap();
        assert_eq!(
            p,
            PlanNode::project(vec![Variable::new("v")], PlanNode::Scan(TriplePattern::new(v("v"), iri("p"), iri("o"))))
        );
    }

    #[test]
    fn optional_shape() {
        let p = parse("SELECT * WHERE { ?a <p> ?b OPTIONAL { ?b <q> ?c } }").unwrap();
        match p {
            PlanNode::LeftJoin(a, b, None) => {
                assert!(a.is_server_evaluable());
                assert!(b.is_server_evaluable());
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn optional_filter_becomes_condition() {
        let p = parse("SELECT * WHERE { ?a <p> ?b OPTIONAL { ?b <q> ?c FILTER(?c > ?b) } }").unwrap();
        assert!(matches!(p, PlanNode::LeftJoin(_, _, Some(_))));
    }

    #[test]
    fn prefixes_abbreviations_and_numbers() {
        let q = "PREFIX ex: <http://ex.org/> SELECT ?s WHERE { ?s a ex:C ; ex:age 42 , 4.5 . }";
        let p = parse(q).unwrap();
        let PlanNode::Project(_, body) = p else { panic!() };
        assert_eq!(body.size(), 5);
        let text = body.pretty();
        assert!(text.contains("<http://www.w3.org/1999/02/22-rdf-syntax-ns#type> <http://ex.org/C>"));
        assert!(text.contains("\"4.5\"^^<http://www.w3.org/2001/XMLSchema#decimal>"));
    }

    #[test]
    fn modifiers_nest_in_order() {
        let q = "SELECT DISTINCT ?g (COUNT(*) AS ?n) WHERE { ?s <p> ?g } GROUP BY ?g ORDER BY DESC(?n)";
        let p = parse(q).unwrap();
        let names: Vec<&str> = {
            let mut out = Vec::new();
            let mut cur = &p;
            loop {
                out.push(cur.name());
                match cur.children().first() {
                    Some(c) => cur = c,
                    None => break,
                }
            }
            out
        };
        assert_eq!(names, ["Distinct", "Project", "OrderBy", "GroupBy", "Scan"]);
    }

    #[test]
    fn union_chain_is_left_associative() {
        let p = parse("SELECT * WHERE { { ?a <p> ?b } UNION { ?a <q> ?b } UNION { ?a <r> ?b } }").unwrap();
        match p {
            PlanNode::Union(l, _) => assert!(matches!(*l, PlanNode::Union(..))),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn filter_precedence() {
        let p = parse("SELECT * WHERE { ?a <p> ?b FILTER(?a = <x> || ?b < 3 && !?c) }").unwrap();
        let PlanNode::Filter(e, _) = p else { panic!() };
        assert!(matches!(e, FilterExpr::Or(_, ref r) if matches!(**r, FilterExpr::And(..))));
    }

    #[test]
    fn errors() {
        assert_eq!(parse("CONSTRUCT { ?s ?p ?o } WHERE { ?s ?p ?o }"), Err(ParseError::Unsupported { feature: "CONSTRUCT".into() }));
        assert!(matches!(parse("SELECT * WHERE { ?s <p>/<q> ?o }"), Err(ParseError::Unsupported { feature }) if feature == "property paths"));
        assert!(matches!(parse("SELECT * WHERE { ?s <p> ?o } LIMIT 3"), Err(ParseError::Unsupported { .. })));
        assert!(matches!(parse("SELECT * WHERE { ?s <p> }"), Err(ParseError::Syntax { .. })));
        assert!(matches!(parse("SELECT ?x WHERE { ?s <p> ?o"), Err(ParseError::Syntax { .. })));
        assert!(matches!(parse("SELECT * WHERE { ?s ex:p ?o }"), Err(ParseError::Syntax { .. })));
        assert!(matches!(parse("SELECT ?s (COUNT(*) AS ?n) WHERE { ?s <p> ?o }"), Err(ParseError::Syntax { .. })));
    }

    #[test]
    fn exists_and_service() {
        let p = parse("SELECT * WHERE { ?a <p> ?b FILTER NOT EXISTS { ?b <q> ?c } SERVICE <http://r/sparql> { ?b <r> ?d } }")
            .unwrap();
        let PlanNode::Filter(e, body) = p else { panic!() };
        assert!(!e.is_pure());
        assert!(matches!(*body, PlanNode::Join(_, ref s) if matches!(**s, PlanNode::Service(..))));
    }
}
