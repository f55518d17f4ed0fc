use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("matrix is not positive semidefinite (min eigenvalue {min_eigenvalue:e})")]
    NotPsd { min_eigenvalue: f64 },
    #[error("argument outside the function domain: {0}")]
    DomainError(String),
    #[error("index {index} out of range 1..={len}")]
    IndexOutOfRange { index: usize, len: usize },
    #[error("channel outage: |h_{user}| = {magnitude:e} below guard")]
    ChannelOutage { user: usize, magnitude: f64 },
    #[error("single-user system cannot carry a zero-sum perturbation")]
    SingleUserDegenerate,
    #[error("privacy constraint cannot be met at any finite power scaling: {0}")]
    InfeasibleInputs(String),
    #[error("solver did not converge after {iterations} iterations (residual {residual:e})")]
    SolverNonConvergence { iterations: usize, residual: f64 },
    #[error("user {user} transmit power {power:e} exceeds budget {budget:e}")]
    PowerViolation { user: usize, power: f64, budget: f64 },
    #[error("model dimension {0} too small (need at least 5)")]
    DimensionTooSmall(usize),
    #[error("configuration error: {0}")]
    ConfigError(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
