use thiserror::Error;

/// Errors produced by the numerical routines.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("grid does not contain the origin (arclength is measured from x = 0)")]
    GridMissingOrigin,

    #[error("non-finite geometric quantity at node {index} (x = {x})")]
    NonFiniteGeometry { index: usize, x: f64 },

    #[error("kernel quadrature failed to converge for eta = {eta}, derivative order {order}")]
    KernelQuadratureFailure { eta: f64, order: usize },

    #[error("invalid time t = {0}; must be positive and finite")]
    InvalidTime(f64),

    #[error("unsupported far field: {0}")]
    UnsupportedFarField(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("Picard iteration diverged after {} iterations", history.len())]
    PicardDivergence { history: Vec<f64> },

    #[error("Picard iteration did not reach tolerance {tol:e} within {max_iter} iterations (last update {last:e})")]
    NoConvergence { tol: f64, max_iter: usize, last: f64 },

    #[error("profile has not converged; reconstruction refused")]
    StaleProfile,

    #[error("time march became unstable at t = {t} (sup-norm jumped from {before:e} to {after:e})")]
    OracleInstability { t: f64, before: f64, after: f64 },

    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),

    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("malformed input: {0}")]
    Malformed(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
