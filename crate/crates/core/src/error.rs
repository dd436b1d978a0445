use std::path::PathBuf;

use thiserror::Error;

/// Errors raised anywhere in the modeling and active-learning pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("matrix is not positive definite (pivot {pivot} at row {row})")]
    NotPositiveDefinite { row: usize, pivot: f64 },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("point {point:?} lies outside the design space")]
    OutOfDomain { point: Vec<f64> },

    #[error("degenerate data: {0}")]
    DegenerateData(String),

    #[error("reference set has no mass in the requested region")]
    EmptyReference,

    #[error("no candidates to score")]
    EmptyCandidates,

    #[error("region {region} too small: {found} of {wanted} candidates after {draws} draws")]
    RegionTooSmall {
        region: usize,
        found: usize,
        wanted: usize,
        draws: usize,
    },

    #[error("no stored record within tolerance of {point:?}")]
    NoSuchRecord { point: Vec<f64> },

    #[error("operation unsupported by this oracle: {0}")]
    Unsupported(&'static str),

    #[error("oracle timed out waiting for {0}")]
    OracleTimeout(PathBuf),

    #[error("oracle failure: {0}")]
    OracleFailure(String),

    #[error("division by zero in relative error at evaluation point {index}")]
    DivisionByZero { index: usize },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("malformed csv {path}: {message}")]
    Csv { path: PathBuf, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn check_dim(expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, got })
    }
}
