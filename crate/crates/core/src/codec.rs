//! Binary encoding of saved plans.
//!
//! Layout: magic `SGP1`, 8-byte little-endian dataset fingerprint, then the
//! operator tree in prefix order. Each operator starts with a one-byte tag,
//! strings are a `u32` byte length followed by UTF-8, integers are fixed-width
//! little-endian, and children follow their parent left to right.

use alloc::boxed::Box;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use crate::algebra::{CmpOp, FilterExpr};
use crate::engine::{OuterState, SavedOp, SavedPlan};
use crate::pattern::{PatternTerm, SolutionMapping, TriplePattern, Variable};
use crate::store::{IndexId, ScanPosition};
use crate::term::{Term, TermKind, Triple};

pub const MAGIC: &[u8; 3] = b"SGP";
pub const VERSION: u8 = b'1';

const TAG_PROJECTION: u8 = 0x01;
const TAG_SCAN: u8 = 0x02;
const TAG_ILJ: u8 = 0x03;
const TAG_MERGE: u8 = 0x04;
const TAG_UNION: u8 = 0x05;
const TAG_FILTER: u8 = 0x06;

const MAX_DEPTH: usize = 512;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum DecodeError {
    BadMagic,
    IncompatibleVersion { found: u8 },
    Truncated { offset: usize },
    InvalidTag { offset: usize, tag: u8 },
    InvalidUtf8 { offset: usize },
    InvalidValue { offset: usize, what: &'static str },
    TooDeep,
    TrailingBytes { offset: usize },
}

impl fmt::Display for DecodeError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DecodeError::BadMagic => f.write_str("not a saved plan (bad magic)"),
            DecodeError::IncompatibleVersion { found } => {
                write!(f, "incompatible plan version (found {:?}, expected {:?})", *found as char, VERSION as char)
            }
            DecodeError::Truncated { offset } => write!(f, "truncated plan at byte {offset}"),
            DecodeError::InvalidTag { offset, tag } => write!(f, "invalid tag 0x{tag:02x} at byte {offset}"),
            DecodeError::InvalidUtf8 { offset } => write!(f, "invalid UTF-8 string at byte {offset}"),
            DecodeError::InvalidValue { offset, what } => write!(f, "invalid {what} at byte {offset}"),
            DecodeError::TooDeep => f.write_str("plan nesting too deep"),
            DecodeError::TrailingBytes { offset } => write!(f, "trailing bytes after plan at byte {offset}"),
        }
    }
}

#[cfg(feature = "std")]
impl std::error::Error for DecodeError {}

pub fn encode(plan: &SavedPlan) -> Vec<u8> {
    let mut w = Writer(Vec::with_capacity(256));
    w.0.extend_from_slice(MAGIC);
    w.0.push(VERSION);
    w.0.extend_from_slice(&plan.fingerprint.to_le_bytes());
    w.op(&plan.root);
    w.0
}

pub fn decode(bytes: &[u8]) -> Result<SavedPlan, DecodeError> {
    if bytes.len() < 4 {
        return Err(if MAGIC.starts_with(bytes) { DecodeError::Truncated { offset: bytes.len() } } else { DecodeError::BadMagic });
    }
    if &bytes[..3] != MAGIC {
        return Err(DecodeError::BadMagic);
    }
    if bytes[3] != VERSION {
        return Err(DecodeError::IncompatibleVersion { found: bytes[3] });
    }
    let mut r = Reader { bytes, pos: 4, depth: 0 };
    let fingerprint = r.u64()?;
    let root = r.op()?;
    if r.pos != bytes.len() {
        return Err(DecodeError::TrailingBytes { offset: r.pos });
    }
    Ok(SavedPlan { fingerprint, root })
}

struct Writer(Vec<u8>);

impl Writer {
    fn u8(&mut self, v: u8) {
        self.0.push(v);
    }

    fn u32(&mut self, v: u32) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }

    fn str(&mut self, s: &str) {
        self.u32(s.len() as u32);
        self.0.extend_from_slice(s.as_bytes());
    }

    fn term(&mut self, t: &Term) {
        match (t.kind(), t.datatype(), t.language()) {
            (TermKind::Iri, _, _) => {
                self.u8(0);
                self.str(t.lexical());
            }
            (TermKind::Blank, _, _) => {
                self.u8(1);
                self.str(t.lexical());
            }
            (TermKind::Literal, _, Some(lang)) => {
                self.u8(4);
                self.str(t.lexical());
                self.str(lang);
            }
            (TermKind::Literal, Some(dt), None) => {
                self.u8(3);
                self.str(t.lexical());
                self.str(dt);
            }
            (TermKind::Literal, None, None) => {
                self.u8(2);
                self.str(t.lexical());
            }
        }
    }

    fn pattern_term(&mut self, p: &PatternTerm) {
        match p {
            PatternTerm::Var(v) => {
                self.u8(0);
                self.str(v.name());
            }
            PatternTerm::Term(t) => {
                self.u8(1);
                self.term(t);
            }
        }
    }

    fn mapping(&mut self, mu: &SolutionMapping) {
        self.u32(mu.len() as u32);
        for (v, t) in mu.iter() {
            self.str(v.name());
            self.term(t);
        }
    }

    fn outer(&mut self, s: &OuterState) {
        match s {
            OuterState::None => self.u8(0),
            OuterState::Inherit => self.u8(1),
            OuterState::Explicit(mu) => {
                self.u8(2);
                self.mapping(mu);
            }
        }
    }

    fn expr(&mut self, e: &FilterExpr) {
        match e {
            FilterExpr::Var(v) => {
                self.u8(0);
                self.str(v.name());
            }
            FilterExpr::Const(t) => {
                self.u8(1);
                self.term(t);
            }
            FilterExpr::Not(a) => {
                self.u8(2);
                self.expr(a);
            }
            FilterExpr::And(a, b) => {
                self.u8(3);
                self.expr(a);
                self.expr(b);
            }
            FilterExpr::Or(a, b) => {
                self.u8(4);
                self.expr(a);
                self.expr(b);
            }
            FilterExpr::Cmp(op, a, b) => {
                self.u8(5);
                self.u8(op.to_byte());
                self.expr(a);
                self.expr(b);
            }
            // EXISTS is evaluated by the client and never reaches a saved
            // plan; the tags are reserved and rejected on decode.
            FilterExpr::Exists(_) => self.u8(6),
            FilterExpr::NotExists(_) => self.u8(7),
        }
    }

    fn op(&mut self, op: &SavedOp) {
        match op {
            SavedOp::Projection { vars, child } => {
                self.u8(TAG_PROJECTION);
                self.u32(vars.len() as u32);
                for v in vars {
                    self.str(v.name());
                }
                self.op(child);
            }
            SavedOp::IndexScan { pattern, position } => {
                self.u8(TAG_SCAN);
                for p in pattern.positions() {
                    self.pattern_term(p);
                }
                self.u8(position.index.to_byte());
                match &position.last {
                    None => self.u8(0),
                    Some(t) => {
                        self.u8(1);
                        self.term(&t.subject);
                        self.term(&t.predicate);
                        self.term(&t.object);
                    }
                }
            }
            SavedOp::IndexLoopJoin { current, outer, inner } => {
                self.u8(TAG_ILJ);
                self.outer(current);
                self.op(outer);
                self.op(inner);
            }
            SavedOp::MergeJoin { var, current, left, right } => {
                self.u8(TAG_MERGE);
                self.str(var.name());
                self.outer(current);
                self.op(left);
                self.op(right);
            }
            SavedOp::Union { active, children } => {
                self.u8(TAG_UNION);
                self.u32(*active);
                self.u32(children.len() as u32);
                for c in children {
                    self.op(c);
                }
            }
            SavedOp::Filter { expr, child } => {
                self.u8(TAG_FILTER);
                self.expr(expr);
                self.op(child);
            }
        }
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
    depth: usize,
}

impl Reader<'_> {
    fn take(&mut self, n: usize) -> Result<&[u8], DecodeError> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        match end {
            Some(end) => {
                let s = &self.bytes[self.pos..end];
                self.pos = end;
                Ok(s)
            }
            None => Err(DecodeError::Truncated { offset: self.bytes.len() }),
        }
    }

    fn u8(&mut self) -> Result<u8, DecodeError> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32, DecodeError> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }

    fn u64(&mut self) -> Result<u64, DecodeError> {
        let b = self.take(8)?;
        let mut a = [0u8; 8];
        a.copy_from_slice(b);
        Ok(u64::from_le_bytes(a))
    }

    fn str(&mut self) -> Result<String, DecodeError> {
        let len = self.u32()? as usize;
        let start = self.pos;
        let b = self.take(len)?;
        core::str::from_utf8(b).map(String::from).map_err(|_| DecodeError::InvalidUtf8 { offset: start })
    }

    /// A count of items each at least `min_size` bytes long.
    fn count(&mut self, min_size: usize) -> Result<usize, DecodeError> {
        let n = self.u32()? as usize;
        if n.saturating_mul(min_size) > self.bytes.len() - self.pos {
            return Err(DecodeError::Truncated { offset: self.bytes.len() });
        }
        Ok(n)
    }

    fn tag(&mut self) -> Result<(usize, u8), DecodeError> {
        let at = self.pos;
        Ok((at, self.u8()?))
    }

    fn term(&mut self) -> Result<Term, DecodeError> {
        let (at, kind) = self.tag()?;
        Ok(match kind {
            0 => Term::iri(self.str()?),
            1 => Term::blank(self.str()?),
            2 => Term::literal(self.str()?),
            3 => {
                let lex = self.str()?;
                Term::typed_literal(lex, self.str()?)
            }
            4 => {
                let lex = self.str()?;
                Term::lang_literal(lex, self.str()?)
            }
            tag => return Err(DecodeError::InvalidTag { offset: at, tag }),
        })
    }

    fn pattern_term(&mut self) -> Result<PatternTerm, DecodeError> {
        let (at, tag) = self.tag()?;
        match tag {
            0 => Ok(PatternTerm::Var(Variable::new(self.str()?))),
            1 => Ok(PatternTerm::Term(self.term()?)),
            tag => Err(DecodeError::InvalidTag { offset: at, tag }),
        }
    }

    fn mapping(&mut self) -> Result<SolutionMapping, DecodeError> {
        let n = self.count(9)?;
        let mut mu = SolutionMapping::new();
        for _ in 0..n {
            let at = self.pos;
            let v = Variable::new(self.str()?);
            let t = self.term()?;
            if mu.insert(v, t).is_some() {
                return Err(DecodeError::InvalidValue { offset: at, what: "duplicate variable in mapping" });
            }
        }
        Ok(mu)
    }

    fn outer(&mut self) -> Result<OuterState, DecodeError> {
        let (at, tag) = self.tag()?;
        match tag {
            0 => Ok(OuterState::None),
            1 => Ok(OuterState::Inherit),
            2 => Ok(OuterState::Explicit(self.mapping()?)),
            tag => Err(DecodeError::InvalidTag { offset: at, tag }),
        }
    }

    fn descend(&mut self) -> Result<(), DecodeError> {
        self.depth += 1;
        if self.depth > MAX_DEPTH {
            return Err(DecodeError::TooDeep);
        }
        Ok(())
    }

    fn expr(&mut self) -> Result<FilterExpr, DecodeError> {
        self.descend()?;
        let (at, tag) = self.tag()?;
        let e = match tag {
            0 => FilterExpr::Var(Variable::new(self.str()?)),
            1 => FilterExpr::Const(self.term()?),
            2 => FilterExpr::Not(Box::new(self.expr()?)),
            3 => {
                let a = self.expr()?;
                FilterExpr::and(a, self.expr()?)
            }
            4 => {
                let a = self.expr()?;
                FilterExpr::or(a, self.expr()?)
            }
            5 => {
                let op_at = self.pos;
                let op = CmpOp::from_byte(self.u8()?)
                    .ok_or(DecodeError::InvalidValue { offset: op_at, what: "comparison operator" })?;
                let a = self.expr()?;
                FilterExpr::cmp(op, a, self.expr()?)
            }
            tag => return Err(DecodeError::InvalidTag { offset: at, tag }),
        };
        self.depth -= 1;
        Ok(e)
    }

    fn op(&mut self) -> Result<SavedOp, DecodeError> {
        self.descend()?;
        let (at, tag) = self.tag()?;
        let op = match tag {
            TAG_PROJECTION => {
                let n = self.count(4)?;
                let mut vars = Vec::with_capacity(n);
                for _ in 0..n {
                    vars.push(Variable::new(self.str()?));
                }
                SavedOp::Projection { vars, child: Box::new(self.op()?) }
            }
            TAG_SCAN => {
                let s = self.pattern_term()?;
                let p = self.pattern_term()?;
                let o = self.pattern_term()?;
                let idx_at = self.pos;
                let index = IndexId::from_byte(self.u8()?)
                    .ok_or(DecodeError::InvalidValue { offset: idx_at, what: "index id" })?;
                let (flag_at, flag) = self.tag()?;
                let last = match flag {
                    0 => None,
                    1 => {
                        let s = self.term()?;
                        let p = self.term()?;
                        Some(Triple::new(s, p, self.term()?))
                    }
                    tag => return Err(DecodeError::InvalidTag { offset: flag_at, tag }),
                };
                SavedOp::IndexScan { pattern: TriplePattern::new(s, p, o), position: ScanPosition { index, last } }
            }
            TAG_ILJ => {
                let current = self.outer()?;
                let outer = Box::new(self.op()?);
                SavedOp::IndexLoopJoin { current, outer, inner: Box::new(self.op()?) }
            }
            TAG_MERGE => {
                let var = Variable::new(self.str()?);
                let current = self.outer()?;
                let left = Box::new(self.op()?);
                SavedOp::MergeJoin { var, current, left, right: Box::new(self.op()?) }
            }
            TAG_UNION => {
                let active = self.u32()?;
                let n = self.count(1)?;
                let mut children = Vec::with_capacity(n);
                for _ in 0..n {
                    children.push(self.op()?);
                }
                SavedOp::Union { active, children }
            }
            TAG_FILTER => {
                let expr = self.expr()?;
                SavedOp::Filter { expr, child: Box::new(self.op()?) }
            }
            tag => return Err(DecodeError::InvalidTag { offset: at, tag }),
        };
        self.depth -= 1;
        Ok(op)
    }
}
