//! Error type shared across the crate.

use thiserror::Error;

/// Errors produced while loading data or running the pipeline.
///
/// Everything here is a *data* problem (bad input files, mismatched
/// artifacts, degenerate datasets). Programmer errors such as indexing a
/// model with an out-of-range feature panic instead.
#[derive(Debug, Error)]
pub enum Error {
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("feature index {index} out of range for dimensionality {dim}")]
    IndexOutOfRange { index: usize, dim: usize },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid synthetic spec: {0}")]
    InvalidSpec(String),

    #[error("contingency table requires two distinct features, got {0} twice")]
    SameFeature(usize),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("training data contains a single class")]
    SingleClass,

    #[error("sample is already classified benign (decision {0})")]
    AlreadyBenign(f64),

    #[error("no eligible samples: {0}")]
    NoEligible(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
