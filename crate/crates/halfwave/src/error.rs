use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("fields live on different grids")]
    GridMismatch,
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("non-finite value encountered: {0}")]
    NonFinite(String),
    #[error("undefined regime: {0}")]
    Undefined(String),
    #[error("degenerate configuration: {0}")]
    Degenerate(String),
    #[error("{solver} did not converge after {iterations} iterations (residual {residual:.3e}): {reason}")]
    NonConvergence {
        solver: &'static str,
        iterations: usize,
        residual: f64,
        reason: String,
    },
    #[error("box too small: {0}")]
    BoxTooSmall(String),
    #[error("field format: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
