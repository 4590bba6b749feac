//! Error types shared across the library.

use thiserror::Error;

/// Errors produced by construction, assembly, and integration routines.
#[derive(Debug, Error)]
pub enum Error {
    #[error("Fock cutoff must be at least 2, got {0}")]
    CutoffTooSmall(usize),

    #[error("dimension mismatch: {0}")]
    DimMismatch(String),

    #[error("mode index {index} out of range for {modes} mode(s)")]
    ModeOutOfRange { index: usize, modes: usize },

    #[error(
        "coherent-state leakage {leakage:.3e} above threshold {threshold:.3e} \
         at cutoff {cutoff}; need cutoff >= {required}"
    )]
    Leakage {
        leakage: f64,
        threshold: f64,
        cutoff: usize,
        required: usize,
    },

    #[error("state dimension {dim} exceeds budget {budget}")]
    Budget { dim: usize, budget: usize },

    #[error("invalid density matrix: {0}")]
    InvalidState(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("integration failed: {0}")]
    Integration(String),

    #[error("ill-conditioned codespace Gram matrix (cond = {cond:.3e})")]
    IllConditioned { cond: f64 },

    #[error("linear algebra backend: {0}")]
    Backend(String),

    #[error("serialization: {0}")]
    Serde(String),
}

impl From<ndarray_linalg::error::LinalgError> for Error {
    fn from(e: ndarray_linalg::error::LinalgError) -> Self {
        Error::Backend(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Serde(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
