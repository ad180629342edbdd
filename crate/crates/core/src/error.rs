use thiserror::Error;

/// Errors raised by the toolkit.
///
/// Infeasibility of a synthesis program is reported through result statuses,
/// not through this type; `Infeasible` here is reserved for operations whose
/// contract has no status channel (compensator synthesis, patch updates).
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("invalid input: {0}")]
    Invalid(String),
    #[error("quadratic cost is not positive semidefinite")]
    NotPsd,
    #[error("constraints are not decoupled: {0}")]
    NotDecoupled(String),
    #[error("infeasible: {0}")]
    Infeasible(String),
    #[error("unbounded: {0}")]
    Unbounded(String),
    #[error("plant is not open-loop stable (spectral radius {0:.6})")]
    Unstable(f64),
    #[error("factorization failed: {0}")]
    Factorization(String),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

