//! Toolkit for comparative opinion quintuple extraction.
//!
//! A review is a whitespace-tokenized sentence (or document) annotated with
//! zero or more quintuples `(subject, object, aspect, predicate, label)`.
//! Every span element carries the 1-based token positions it occupies, in
//! the `"7&&better"` encoding used by the shared-task corpus format.
//!
//! The crate is organised as a two-stage pipeline:
//!
//! * [`csi`]: stage 1, a linear softmax head deciding whether a review is
//!   comparative, plus a similarity filter for unannotated comparative
//!   reviews.
//! * [`templates`] and [`align`]: stage 2 post-processing. Generated strings
//!   are parsed back into bare quintuples and their token indices are
//!   recovered by fuzzy window matching.
//!
//! Around those sit [`instructions`] (multi-task instruction datasets),
//! [`augment`] (element replacement augmentation) and [`eval`] (the
//! exact-match metric grid). [`pipeline`] wires the stages together.

pub mod align;
pub mod augment;
pub mod corpus;
pub mod csi;
pub mod eval;
pub mod instructions;
pub mod io;
pub mod pipeline;
pub mod templates;

pub use align::{align_quintuple, AlignError, AlignmentConfig, CandidateSpan};
pub use corpus::{
    normalize_text, parse_record, tokenize, write_record, BareQuintuple, ComparisonLabel,
    CorpusError, CorpusRecord, Element, ElementSpan, Field, Quintuple,
};
pub use eval::{full_grid, ElementCombination, EvalReport, RecordPair};
pub use templates::{parse_generation, render, ParseIssue, ParseOutcome, TemplateKind};
