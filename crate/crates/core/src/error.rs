//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("empty smoothing window at point {index} with bandwidth {h}")]
    EmptyWindow { index: usize, h: f64 },

    #[error("empty smoothing windows at points {indices:?} with bandwidth {h}")]
    EmptyWindows { indices: Vec<usize>, h: f64 },

    #[error("tuning failure: {0}")]
    Tuning(String),

    #[error("missing ground truth: {0}")]
    MissingTruth(String),

    #[error("benchmark cell flagged: {0}")]
    BenchmarkCell(String),
}

pub type Result<T> = std::result::Result<T, Error>;
