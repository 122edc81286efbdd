use std::io;

use thiserror::Error;

/// Errors produced by the engine.
#[derive(Debug, Error)]
pub enum Error {
    #[error("malformed file: {0}")]
    MalformedFile(String),

    #[error("dimension mismatch in {context}: expected {expected}, found {found}")]
    DimensionMismatch {
        context: String,
        expected: usize,
        found: usize,
    },

    #[error("dangling reference: {0}")]
    DanglingReference(String),

    #[error("non-finite value in {0}")]
    NonFiniteValue(String),

    #[error("duplicate id: {0}")]
    DuplicateId(String),

    #[error("invalid bounds: min_count={min}, max_count={max}")]
    InvalidBounds { min: usize, max: usize },

    #[error("item {0} has the wrong role for this operation")]
    WrongRole(String),

    #[error("unknown entity: {0}")]
    UnknownEntity(String),

    #[error("training set has no positive pairs")]
    EmptyTrainingSet,

    #[error("retrieval list is empty but generated candidates were supplied")]
    EmptyRetrievalList,

    #[error("zero-length vector")]
    ZeroVector,

    #[error("empty list")]
    EmptyList,

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("timestep {t} outside 1..={max}")]
    BadTimestep { t: usize, max: usize },

    #[error("flow grid must be at least 2x2, got {h}x{w}")]
    DegenerateGrid { h: usize, w: usize },

    #[error("no ballots to aggregate")]
    EmptyBallots,

    #[error("distribution does not sum to 1 (sum = {0})")]
    NotNormalized(f32),

    #[error("no expert scores")]
    EmptyScores,

    #[error("value out of range: {0}")]
    OutOfRange(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error(transparent)]
    Io(#[from] io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn dim_mismatch(context: impl Into<String>, expected: usize, found: usize) -> Error {
    Error::DimensionMismatch {
        context: context.into(),
        expected,
        found,
    }
}
