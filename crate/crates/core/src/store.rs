//! Read-only triple store with three clustered sort orders.
//!
//! Terms are interned into a sorted dictionary, so term ids preserve the term
//! order and every index can be a plain sorted array of id triples. A scan is
//! a half-open range located with one binary search; resuming a scan locates
//! the last key read with one more binary search.

use alloc::vec::Vec;
use core::fmt;

use sha2::{Digest, Sha256};

use crate::pattern::{PatternTerm, TriplePattern};
use crate::term::{Term, Triple};

pub type TermId = u32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum IndexId {
    Spo,
    Pos,
    Osp,
}

impl IndexId {
    pub const ALL: [IndexId; 3] = [IndexId::Spo, IndexId::Pos, IndexId::Osp];

    /// Component order of the index, as positions into (s, p, o).
    pub fn order(self) -> [usize; 3] {
        match self {
            IndexId::Spo => [0, 1, 2],
            IndexId::Pos => [1, 2, 0],
            IndexId::Osp => [2, 0, 1],
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            IndexId::Spo => "spo",
            IndexId::Pos => "pos",
            IndexId::Osp => "osp",
        }
    }

    pub fn to_byte(self) -> u8 {
        self as u8
    }

    pub fn from_byte(b: u8) -> Option<Self> {
        match b {
            0 => Some(IndexId::Spo),
            1 => Some(IndexId::Pos),
            2 => Some(IndexId::Osp),
            _ => None,
        }
    }

    pub fn permute(self, spo: [TermId; 3]) -> [TermId; 3] {
        let o = self.order();
        [spo[o[0]], spo[o[1]], spo[o[2]]]
    }

    pub fn unpermute(self, key: [TermId; 3]) -> [TermId; 3] {
        let o = self.order();
        let mut spo = [0; 3];
        for (i, &pos) in o.iter().enumerate() {
            spo[pos] = key[i];
        }
        spo
    }
}

impl fmt::Display for IndexId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Index routing by bound components; `(s, ?p, o)` uses spo and post-filters o.
pub fn select_index(bound: [bool; 3]) -> IndexId {
    match bound {
        [true, _, _] => IndexId::Spo,
        [false, true, _] => IndexId::Pos,
        [false, false, true] => IndexId::Osp,
        [false, false, false] => IndexId::Spo,
    }
}

pub fn select_index_for(pattern: &TriplePattern) -> IndexId {
    let b = pattern.positions().map(|p| p.as_term().is_some());
    select_index(b)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum StoreError {
    /// The position key is not in the store, or belongs to another index.
    StalePosition,
}

impl fmt::Display for StoreError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            StoreError::StalePosition => f.write_str("stale position"),
        }
    }
}

/// Where a scan stands: nothing read yet, or strictly after a full key.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ScanPosition {
    pub index: IndexId,
    pub last: Option<Triple>,
}

impl ScanPosition {
    pub fn start(index: IndexId) -> Self {
        ScanPosition { index, last: None }
    }

    pub fn is_start(&self) -> bool {
        self.last.is_none()
    }
}

/// A triple pattern translated to term ids.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EncodedPattern {
    pub bound: [Option<TermId>; 3],
    /// Pairs of positions that hold the same variable.
    pub same: Vec<(usize, usize)>,
    /// A constant is absent from the dictionary: nothing can match.
    pub empty: bool,
    index: IndexId,
}

impl EncodedPattern {
    pub fn accepts(&self, spo: &[TermId; 3]) -> bool {
        !self.empty
            && self.bound.iter().zip(spo).all(|(b, id)| b.is_none_or(|b| b == *id))
            && self.same.iter().all(|&(a, b)| spo[a] == spo[b])
    }

    pub fn index(&self) -> IndexId {
        self.index
    }
}

/// A resumable range scan. Holds no borrow of the store.
#[derive(Debug, Clone)]
pub struct Cursor {
    pattern: EncodedPattern,
    index: IndexId,
    prefix: [TermId; 3],
    prefix_len: usize,
    next: usize,
    last: Option<usize>,
    done: bool,
}

impl Cursor {
    pub fn index(&self) -> IndexId {
        self.index
    }

    pub fn pattern(&self) -> &EncodedPattern {
        &self.pattern
    }

    /// Slot of the last key read, if any.
    pub fn last_slot(&self) -> Option<usize> {
        self.last
    }

    fn prefix(&self) -> &[TermId] {
        &self.prefix[..self.prefix_len]
    }
}

#[derive(Debug, Clone)]
pub struct TripleStore {
    terms: Vec<Term>,
    indexes: [Vec<[TermId; 3]>; 3],
    checksums: [u64; 3],
    fingerprint: u64,
}

impl Default for TripleStore {
    fn default() -> Self {
        TripleStore::from_triples(core::iter::empty())
    }
}

impl TripleStore {
    /// Builds a store from triples; duplicates are collapsed.
    pub fn from_triples(triples: impl IntoIterator<Item = Triple>) -> Self {
        let triples: Vec<Triple> = triples.into_iter().collect();
        let mut terms: Vec<Term> = Vec::with_capacity(triples.len());
        for t in &triples {
            terms.push(t.subject.clone());
            terms.push(t.predicate.clone());
            terms.push(t.object.clone());
        }
        terms.sort_unstable();
        terms.dedup();
        terms.shrink_to_fit();

        let id = |t: &Term| terms.binary_search(t).expect("term interned") as TermId;
        let mut spo: Vec<[TermId; 3]> =
            triples.iter().map(|t| [id(&t.subject), id(&t.predicate), id(&t.object)]).collect();
        drop(triples);
        spo.sort_unstable();
        spo.dedup();
        let mut pos: Vec<_> = spo.iter().map(|k| IndexId::Pos.permute(*k)).collect();
        pos.sort_unstable();
        let mut osp: Vec<_> = spo.iter().map(|k| IndexId::Osp.permute(*k)).collect();
        osp.sort_unstable();

        let mut store = TripleStore { terms, indexes: [spo, pos, osp], checksums: [0; 3], fingerprint: 0 };
        store.compute_checksums();
        store
    }

    fn compute_checksums(&mut self) {
        let mut dict = Sha256::new();
        for t in &self.terms {
            let kind = [t.kind() as u8];
            dict.update(kind);
            for part in [Some(t.lexical()), t.datatype(), t.language()] {
                let s = part.unwrap_or("");
                dict.update((s.len() as u32).to_le_bytes());
                dict.update(s.as_bytes());
            }
        }
        for (i, index) in self.indexes.iter().enumerate() {
            let mut h = dict.clone();
            h.update([i as u8]);
            for key in index {
                for id in key {
                    h.update(id.to_le_bytes());
                }
            }
            self.checksums[i] = first_u64(&h.finalize());
        }
        let mut h = Sha256::new();
        for c in self.checksums {
            h.update(c.to_le_bytes());
        }
        self.fingerprint = first_u64(&h.finalize());
    }

    pub fn len(&self) -> usize {
        self.indexes[0].len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn term_count(&self) -> usize {
        self.terms.len()
    }

    pub fn checksums(&self) -> [u64; 3] {
        self.checksums
    }

    /// Hash of the per-index checksums; identifies the dataset in saved plans.
    pub fn fingerprint(&self) -> u64 {
        self.fingerprint
    }

    pub fn term(&self, id: TermId) -> &Term {
        &self.terms[id as usize]
    }

    pub fn term_id(&self, term: &Term) -> Option<TermId> {
        self.terms.binary_search(term).ok().map(|i| i as TermId)
    }

    /// Keys of one index, permuted into that index's component order.
    pub fn index_keys(&self, index: IndexId) -> &[[TermId; 3]] {
        &self.indexes[index as usize]
    }

    pub fn triples(&self) -> impl Iterator<Item = Triple> + '_ {
        self.indexes[0].iter().map(|k| self.decode(*k))
    }

    pub fn decode(&self, spo: [TermId; 3]) -> Triple {
        Triple::new(self.term(spo[0]).clone(), self.term(spo[1]).clone(), self.term(spo[2]).clone())
    }

    pub fn encode_triple(&self, t: &Triple) -> Option<[TermId; 3]> {
        Some([self.term_id(&t.subject)?, self.term_id(&t.predicate)?, self.term_id(&t.object)?])
    }

    pub fn encode_pattern(&self, pattern: &TriplePattern) -> EncodedPattern {
        let mut bound = [None; 3];
        let mut empty = false;
        let slots = pattern.positions();
        for (i, slot) in slots.iter().enumerate() {
            if let PatternTerm::Term(t) = slot {
                match self.term_id(t) {
                    Some(id) => bound[i] = Some(id),
                    None => empty = true,
                }
            }
        }
        let mut same = Vec::new();
        for a in 0..3 {
            for b in a + 1..3 {
                if let (Some(x), Some(y)) = (slots[a].as_var(), slots[b].as_var()) {
                    if x == y {
                        same.push((a, b));
                    }
                }
            }
        }
        EncodedPattern { bound, same, empty, index: select_index_for(pattern) }
    }

    fn cursor_shell(&self, pattern: EncodedPattern) -> Cursor {
        let index = pattern.index();
        let mut prefix = [0; 3];
        let mut prefix_len = 0;
        for &pos in &index.order() {
            match pattern.bound[pos] {
                Some(id) => {
                    prefix[prefix_len] = id;
                    prefix_len += 1;
                }
                None => break,
            }
        }
        let done = pattern.empty;
        Cursor { pattern, index, prefix, prefix_len, next: 0, last: None, done }
    }

    /// Opens a fresh scan at the start of the pattern's range.
    pub fn open(&self, pattern: EncodedPattern) -> Cursor {
        let mut c = self.cursor_shell(pattern);
        if !c.done {
            c.next = lower_bound(self.index_keys(c.index), c.prefix(), &mut 0);
        }
        c
    }

    /// Reopens a scan strictly after `last` (spo ids), counting key comparisons.
    pub fn reopen(
        &self,
        pattern: EncodedPattern,
        last: Option<[TermId; 3]>,
        comparisons: &mut u64,
    ) -> Result<Cursor, StoreError> {
        let Some(last) = last else {
            return Ok(self.open(pattern));
        };
        let mut c = self.cursor_shell(pattern);
        let keys = self.index_keys(c.index);
        let key = c.index.permute(last);
        let slot = locate(keys, &key, comparisons).ok_or(StoreError::StalePosition)?;
        c.next = slot + 1;
        c.last = Some(slot);
        Ok(c)
    }

    /// Advances the cursor to the next matching triple (spo ids).
    pub fn next(&self, c: &mut Cursor) -> Option<[TermId; 3]> {
        if c.done {
            return None;
        }
        let keys = self.index_keys(c.index);
        while c.next < keys.len() {
            let key = keys[c.next];
            if key[..c.prefix_len] != *c.prefix() {
                if key[..c.prefix_len] < *c.prefix() {
                    // resumed from a key that sorts before the range
                    c.next = lower_bound(keys, c.prefix(), &mut 0);
                    continue;
                }
                c.done = true;
                return None;
            }
            c.last = Some(c.next);
            c.next += 1;
            let spo = c.index.unpermute(key);
            if c.pattern.accepts(&spo) {
                return Some(spo);
            }
        }
        c.done = true;
        None
    }

    /// Repositions so the next key read is the first whose leading free
    /// component is `>= value`.
    pub fn seek(&self, c: &mut Cursor, value: TermId) {
        if c.pattern.empty || c.prefix_len == 3 {
            return;
        }
        let keys = self.index_keys(c.index);
        let mut probe = [0; 4];
        probe[..c.prefix_len].copy_from_slice(c.prefix());
        probe[c.prefix_len] = value;
        let lb = lower_bound(keys, &probe[..=c.prefix_len], &mut 0);
        c.next = lb;
        c.last = lb.checked_sub(1);
        c.done = false;
    }

    /// Spo ids of the last key the cursor read.
    pub fn last_key(&self, c: &Cursor) -> Option<[TermId; 3]> {
        c.last.map(|slot| c.index.unpermute(self.index_keys(c.index)[slot]))
    }

    pub fn position(&self, c: &Cursor) -> ScanPosition {
        ScanPosition { index: c.index, last: self.last_key(c).map(|k| self.decode(k)) }
    }

    /// Number of keys in the pattern's prefix range (exact unless the
    /// pattern needs a post-filter).
    pub fn estimate(&self, pattern: &EncodedPattern) -> usize {
        if pattern.empty {
            return 0;
        }
        let c = self.cursor_shell(pattern.clone());
        let keys = self.index_keys(c.index);
        let lo = lower_bound(keys, c.prefix(), &mut 0);
        let hi = upper_bound(keys, c.prefix());
        hi - lo
    }

    /// Triples matching `pattern` strictly after `position`, in index order.
    pub fn scan(&self, pattern: &TriplePattern, position: &ScanPosition) -> Result<TripleScan<'_>, StoreError> {
        let encoded = self.encode_pattern(pattern);
        if encoded.index() != position.index {
            return Err(StoreError::StalePosition);
        }
        let last = match &position.last {
            Some(t) => Some(self.encode_triple(t).ok_or(StoreError::StalePosition)?),
            None => None,
        };
        let cursor = self.reopen(encoded, last, &mut 0)?;
        Ok(TripleScan { store: self, cursor })
    }
}

pub struct TripleScan<'a> {
    store: &'a TripleStore,
    cursor: Cursor,
}

impl TripleScan<'_> {
    pub fn position(&self) -> ScanPosition {
        self.store.position(&self.cursor)
    }
}

impl Iterator for TripleScan<'_> {
    type Item = Triple;

    fn next(&mut self) -> Option<Triple> {
        self.store.next(&mut self.cursor).map(|k| self.store.decode(k))
    }
}

fn first_u64(digest: &[u8]) -> u64 {
    let mut b = [0u8; 8];
    b.copy_from_slice(&digest[..8]);
    u64::from_le_bytes(b)
}

fn lower_bound(keys: &[[TermId; 3]], prefix: &[TermId], comparisons: &mut u64) -> usize {
    keys.partition_point(|k| {
        *comparisons += 1;
        &k[..prefix.len()] < prefix
    })
}

fn upper_bound(keys: &[[TermId; 3]], prefix: &[TermId]) -> usize {
    keys.partition_point(|k| &k[..prefix.len()] <= prefix)
}

/// Exact-match binary search.
fn locate(keys: &[[TermId; 3]], key: &[TermId; 3], comparisons: &mut u64) -> Option<usize> {
    keys.binary_search_by(|k| {
        *comparisons += 1;
        k.cmp(key)
    })
    .ok()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(s: &str, p: &str, o: &str) -> Triple {
        Triple::new(Term::iri(s), Term::iri(p), Term::iri(o))
    }

    #[test]
    fn routing() {
        assert_eq!(select_index([false, true, false]), IndexId::Pos);
        assert_eq!(select_index([true, true, true]), IndexId::Spo);
        assert_eq!(select_index([false, false, false]), IndexId::Spo);
        assert_eq!(select_index([false, false, true]), IndexId::Osp);
        assert_eq!(select_index([true, false, true]), IndexId::Spo);
    }

    #[test]
    fn indexes_agree() {
        let store = TripleStore::from_triples([t("a", "p", "b"), t("b", "q", "c"), t("a", "p", "b")]);
        assert_eq!(store.len(), 2);
        for idx in IndexId::ALL {
            assert_eq!(store.index_keys(idx).len(), 2);
        }
    }

    #[test]
    fn empty_store() {
        let store = TripleStore::default();
        assert!(store.is_empty());
        let tp = TriplePattern::new(PatternTerm::var("s"), PatternTerm::var("p"), PatternTerm::var("o"));
        assert_eq!(store.scan(&tp, &ScanPosition::start(IndexId::Spo)).unwrap().count(), 0);
    }

    #[test]
    fn s_o_pattern_post_filters() {
        let store = TripleStore::from_triples([t("a", "p", "x"), t("a", "q", "y"), t("a", "r", "x"), t("b", "p", "x")]);
        let tp = TriplePattern::new(Term::iri("a"), PatternTerm::var("p"), Term::iri("x"));
        let got: Vec<_> = store.scan(&tp, &ScanPosition::start(IndexId::Spo)).unwrap().collect();
        assert_eq!(got, [t("a", "p", "x"), t("a", "r", "x")]);
    }

    #[test]
    fn stale_position() {
        let store = TripleStore::from_triples([t("a", "p", "b")]);
        let tp = TriplePattern::new(PatternTerm::var("s"), Term::iri("p"), PatternTerm::var("o"));
        let pos = ScanPosition { index: IndexId::Pos, last: Some(t("zz", "p", "b")) };
        assert_eq!(store.scan(&tp, &pos).err(), Some(StoreError::StalePosition));
        let wrong_index = ScanPosition::start(IndexId::Osp);
        assert_eq!(store.scan(&tp, &wrong_index).err(), Some(StoreError::StalePosition));
    }

    #[test]
    fn seek_moves_to_leading_free_value() {
        let store = TripleStore::from_triples([t("a", "p", "1"), t("b", "p", "2"), t("c", "p", "3"), t("d", "q", "1")]);
        let tp = TriplePattern::new(PatternTerm::var("s"), Term::iri("p"), PatternTerm::var("o"));
        let mut c = store.open(store.encode_pattern(&tp));
        let two = store.term_id(&Term::iri("2")).unwrap();
        store.seek(&mut c, two);
        let got = store.next(&mut c).map(|k| store.decode(k));
        assert_eq!(got, Some(t("b", "p", "2")));
    }

    #[test]
    fn fingerprint_is_content_addressed() {
        let a = TripleStore::from_triples([t("a", "p", "b"), t("c", "p", "d")]);
        let b = TripleStore::from_triples([t("c", "p", "d"), t("a", "p", "b")]);
        let c = TripleStore::from_triples([t("c", "p", "d")]);
        assert_eq!(a.fingerprint(), b.fingerprint());
        assert_ne!(a.fingerprint(), c.fingerprint());
    }
}
