use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension must be at least {min}, got {got}")]
    Dimension { min: usize, got: usize },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("invalid sequence: {0}")]
    InvalidSequence(String),

    #[error("not a simplex point: {0}")]
    NotInSimplex(String),

    #[error("point lies outside the generator domain (angle {angle:.6})")]
    OutsideDomain { angle: f64 },

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("sampler failed after {retries} retries: {reason}")]
    Sampling { retries: usize, reason: String },

    #[error("no path started inside the conditioning ball (b1 = {b1})")]
    EmptyConditioning { b1: f64 },

    #[error("trajectory coordinate {index} is zero at step {step}")]
    ZeroCoordinate { step: usize, index: usize },

    #[error("wealth became non-positive at step {step}")]
    NonPositiveWealth { step: usize },

    #[error("{path} line {line}: {reason}")]
    Parse { path: PathBuf, line: u64, reason: String },

    #[error("refusing to overwrite {0} (pass --force)")]
    WouldOverwrite(PathBuf),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }
}
