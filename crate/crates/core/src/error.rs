use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by the tensor, solver and caching layers.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid shape: {0}")]
    InvalidShape(String),

    #[error("invalid unfolding spec: {0}")]
    InvalidSpec(String),

    #[error("shape mismatch: expected {expected:?}, got {found:?}")]
    ShapeMismatch { expected: Vec<usize>, found: Vec<usize> },

    #[error("index {index:?} out of range for shape {shape:?}")]
    IndexOutOfRange { index: Vec<usize>, shape: Vec<usize> },

    #[error("duplicate entry at index {0:?}")]
    DuplicateIndex(Vec<usize>),

    #[error("requested rank {rank} outside 1..={max}")]
    RankOutOfRange { rank: usize, max: usize },

    #[error("non-finite value encountered in {0}")]
    NonFinite(&'static str),

    #[error("active mode set is empty")]
    EmptyActiveSet,

    #[error("observed tensor has no entries")]
    EmptyObservations,

    #[error("gradient is identically zero")]
    DegenerateGradient,

    #[error("step direction has no overlap with the observed entries")]
    ZeroOverlap,

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("cache capacity {capacity} exceeds library size {files}")]
    CapacityExceeded { capacity: usize, files: usize },

    #[error("only {found} distinct movies in ratings, need {required}")]
    InsufficientMovies { found: usize, required: usize },

    #[error("no ratings records")]
    EmptyRatings,

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("slot {slot}: {source}")]
    Slot {
        slot: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn at_slot(self, slot: usize) -> Self {
        Error::Slot { slot, source: Box::new(self) }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
