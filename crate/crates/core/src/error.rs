use alloc::string::String;
use alloc::vec::Vec;

use crate::model::TokenId;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("token text {0:?} is empty or not normalized")]
    InvalidToken(String),
    #[error("token id {0} is not in the vocabulary")]
    UnknownToken(TokenId),
    #[error("answer token {0} cannot appear in transaction items or rule antecedents")]
    AnswerNotAllowed(TokenId),
    #[error("token {0} is not an answer token")]
    NotAnAnswer(TokenId),
    #[error("rule antecedent is empty")]
    EmptyAntecedent,
    #[error("itemset contains more than one answer token")]
    MultipleAnswers,
    #[error("duplicate example id {0:?}")]
    DuplicateExample(String),
    #[error("example {0:?} has no annotator answers (required by soft VQA scoring)")]
    MissingAnnotations(String),
    #[error("annotator answer multiset is empty")]
    EmptyAnnotators,
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("brute-force oracle refused: {vocab} tokens with max_length {max_length} exceeds cap of {cap} tokens")]
    OracleCapExceeded {
        vocab: usize,
        max_length: usize,
        cap: usize,
    },
    #[error("synthetic spec requests {requested} matching examples but the split only has {available}")]
    Capacity { requested: usize, available: usize },
    #[error("example {example:?} has no {key} field")]
    MissingGroupKey { example: String, key: &'static str },
    #[error("predictions reference unknown example ids: {0:?}")]
    UnknownExamples(Vec<String>),
    #[error("predictions missing for example ids: {0:?}")]
    MissingPredictions(Vec<String>),
    #[error("split assignment does not cover the dataset: {0}")]
    SplitMismatch(String),
    #[error("training data has no in-vocabulary answer to fall back on")]
    NoFallbackAnswer,
}
