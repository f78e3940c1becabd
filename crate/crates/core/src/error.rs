use thiserror::Error;

use crate::states::IdlerStateParams;

/// Errors raised anywhere in the simulation and reconstruction pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("matrix is not Hermitian (max |M - M^dagger| = {deviation:.3e})")]
    NotHermitian { deviation: f64 },

    #[error("state vector is not normalized (norm = {norm})")]
    NotNormalized { norm: f64 },

    #[error("invalid density matrix: {0}")]
    InvalidState(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("basis mismatch: expected {expected}, found {found}")]
    BasisMismatch { expected: String, found: String },

    #[error("degenerate fit: {0}")]
    DegenerateFit(String),

    #[error("calibration error: {0}")]
    Calibration(String),

    #[error("inconsistent data: {0}")]
    Inconsistent(String),

    #[error("optimizer did not converge after {evaluations} evaluations (best cost {cost:.6e})")]
    NotConverged {
        evaluations: usize,
        cost: f64,
        best: IdlerStateParams,
    },

    #[error("malformed scan file: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
