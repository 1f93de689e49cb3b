//! Multimodal shortcut mining for VQA-style datasets.
//!
//! Every question-image-answer example is summarized as a set of tokens
//! (question words, detected visual labels, and the answer). Frequent
//! co-occurrences are mined exactly, turned into `antecedent => answer`
//! rules, filtered, and then used to
//!
//! * aggregate a confidence-weighted shortcut classifier ([`classifier`]),
//! * partition an evaluation set into *counterexamples*, *easy* and
//!   *unmatched* examples, and score model predictions on each subset
//!   ([`evaluation`]).
//!
//! The crate is `no_std` (with `alloc`). The default `std` and `parallel`
//! features enable rayon-backed parallelism in the miner and rule scoring;
//! results are identical with or without them.
#![cfg_attr(not(any(test, feature = "std")), no_std)]
#![deny(missing_debug_implementations)]

extern crate alloc;

pub mod classifier;
mod error;
pub mod evaluation;
pub mod miner;
pub mod model;
pub mod rules;
pub mod synth;
mod tidset;
pub mod tokenize;

pub use error::{Error, Result};
pub use model::{
    is_correct, matches, AnswerCounts, CorrectnessMode, Dataset, ExampleMeta, Itemset, Namespace,
    Rule, RuleSet, RuleSetProvenance, RuleStats, RuleType, Token, TokenId, Transaction,
    Vocabulary,
};
