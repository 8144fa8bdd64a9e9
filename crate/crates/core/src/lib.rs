//! Preemptable evaluation of a core SPARQL fragment.
//!
//! A server-side plan is a pull pipeline of mapping-at-a-time operators that
//! can be stopped between pulls, saved into a compact by-value plan, and
//! reloaded later to continue exactly where it stopped. Operators that need
//! whole collections of mappings live in [`client`] and run on the consumer
//! side of the wire.
//!
//! The crate is `no_std` (with `alloc`); time is abstracted behind
//! [`engine::Deadline`].

#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

pub mod algebra;
pub mod client;
pub mod codec;
pub mod engine;
pub mod expr;
pub mod ntriples;
pub mod parser;
pub mod pattern;
pub mod store;
pub mod term;

pub use algebra::{classify, serialize_subquery, ClientPlan, FilterExpr, Fragment, PlanNode};
pub use codec::{decode, encode, DecodeError};
pub use engine::{Deadline, EngineError, Plan, SavedOp, SavedPlan};
pub use parser::{parse, ParseError};
pub use pattern::{PatternTerm, SolutionMapping, TriplePattern, Variable};
pub use store::{IndexId, ScanPosition, TripleStore};
pub use term::{Term, TermKind, Triple};
