use std::io;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),

    #[error("malformed header: {0}")]
    Header(String),

    #[error("line {line}: expected {expected} components, found {found}")]
    ComponentCount {
        line: usize,
        expected: usize,
        found: usize,
    },

    #[error("entry count mismatch: header declares {declared}, found {found}")]
    EntryCount { declared: usize, found: usize },

    #[error("duplicate token {0:?}")]
    DuplicateToken(String),

    #[error("non-finite value for token {token:?} at component {index}")]
    NonFinite { token: String, index: usize },

    #[error("truncated stream: {0}")]
    Truncated(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("out-of-vocabulary word {0:?}")]
    OutOfVocabulary(String),

    #[error("invalid token {0:?}")]
    InvalidToken(String),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("zero-norm vector")]
    ZeroNorm,

    #[error("lookup table is empty")]
    EmptyTable,

    #[error("duplicate phrase {0:?}")]
    DuplicatePhrase(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("non-finite value: {0}")]
    NonFiniteValue(String),

    #[error("non-finite activation in layer {layer}")]
    NonFiniteActivation { layer: usize },

    #[error("training diverged at epoch {epoch}")]
    Diverged { epoch: usize },

    #[error("empty split: {0}")]
    EmptySplit(String),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}
