//! Ad hominem forensics over threaded debate-forum dumps.
//!
//! The crate is organised as a batch pipeline:
//!
//! - [`corpus`] loads and pseudonymizes JSON Lines dumps and answers
//!   structural questions (top-level comments, direct replies).
//! - [`classifier`] is a deterministic hashed n-gram logistic model with
//!   k-fold and label-fraction evaluation protocols.
//! - [`scorer`] annotates a corpus with any classifier, either the builtin
//!   model or an external process speaking a line-delimited JSON protocol.
//! - [`explain`] picks non-overlapping trigger trigrams from token scores.
//! - [`networks`], [`temporal`] and [`wordshift`] are the analyses;
//!   [`stats`] holds the statistical toolkit they share.
//! - [`users`] summarizes ad hominem per user and compares profiles.
//! - [`synth`] generates the bundled synthetic corpora used by tests and
//!   examples.

pub mod classifier;
pub mod corpus;
pub mod explain;
pub mod networks;
pub mod scorer;
pub mod stats;
pub mod synth;
pub mod temporal;
pub mod users;
pub mod wordshift;

mod util;

pub use classifier::{tokenize, Token};
pub use corpus::{AuthorId, Corpus, MonthIndex};
pub use util::{substream, write_atomic};
