use thiserror::Error;

/// Errors produced anywhere in the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("search cost must be strictly positive, got {0}")]
    NonPositiveCost(f64),
    #[error("Newton solve for c = {cost} stopped with residual {residual:e} after {iterations} iterations")]
    NoConvergence {
        cost: f64,
        residual: f64,
        iterations: usize,
    },
    #[error("contraction for c = {cost} did not settle within {iterations} iterations")]
    MaxIterationsExceeded { cost: f64, iterations: usize },
    #[error("cost {cost} outside look-up table range [{min}, {max}]")]
    OutOfRange { cost: f64, min: f64, max: f64 },
    #[error("malformed consumer record: {0}")]
    MalformedRecord(String),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("no replication converged for N = {n}, method {method}")]
    AllDiverged { n: usize, method: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
