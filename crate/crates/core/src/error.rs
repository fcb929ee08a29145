use thiserror::Error;

use crate::evaluation::StabilityProfile;
use crate::linalg::VecIndex;

#[derive(Debug, Error)]
pub enum Error {
    #[error("need at least {needed} samples, got {got}")]
    InsufficientSamples { needed: usize, got: usize },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("matrix is not symmetric (max asymmetry {max_asymmetry:e})")]
    NotSymmetric { max_asymmetry: f64 },

    #[error("matrix is not positive semi-definite (smallest eigenvalue {min_eigenvalue:e})")]
    NotPsd { min_eigenvalue: f64 },

    #[error("active block becomes singular when adding vec index {index}")]
    SingularActiveSet { index: VecIndex },

    #[error("matrix is singular")]
    SingularMatrix,

    #[error("lambda {lambda} lies below the covered path range (last knot {last_covered})")]
    OutOfRange { lambda: f64, last_covered: f64 },

    #[error("no grid value meets the instability threshold {}", profile.threshold)]
    NoStableLambda { profile: Box<StabilityProfile> },

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("CSV error in {path}: {message}")]
    Csv { path: String, message: String },

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// True for failures caused by numerical degeneracy rather than malformed input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::NotPsd { .. } | Error::SingularActiveSet { .. } | Error::SingularMatrix
        )
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
