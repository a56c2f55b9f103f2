use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("weights carry no positive mass")]
    AllZeroMass,
    #[error("weights contain NaN or negative entries")]
    InvalidWeights,
    #[error("temperature must be positive, got {0}")]
    NonPositiveTemperature(f64),
    #[error("nucleus mass must lie in (0, 1], got {0}")]
    InvalidNucleus(f64),
    #[error("no table entry or default for context {context:?}")]
    UnknownContext { context: Vec<usize> },
    #[error("token {token} out of range for vocabulary of size {vocab_size}")]
    TokenOutOfRange { token: usize, vocab_size: usize },
    #[error("malformed model file {path}: {detail}")]
    MalformedFile { path: PathBuf, detail: String },
    #[error("index {index} out of range (len {len})")]
    IndexOutOfRange { index: usize, len: usize },
    #[error("removing tokens would leave an empty support")]
    EmptySupport,
    #[error("gamma must lie in [1, {k}], got {gamma}")]
    GammaOutOfRange { gamma: f64, k: usize },
    #[error("trace contains no verification rounds")]
    EmptyTrace,
    #[error("enumeration too large: {what}")]
    TooLargeToEnumerate { what: String },
    #[error("support mismatch: {0}")]
    SupportMismatch(String),
    #[error("vocabulary sizes differ: draft {draft}, target {target}")]
    VocabMismatch { draft: usize, target: usize },
    #[error("invalid decoder configuration: {0}")]
    InvalidConfig(String),
    #[error("i/o error on {path}: {detail}")]
    Io { path: PathBuf, detail: String },
}

pub type Result<T> = std::result::Result<T, Error>;
