use thiserror::Error;

/// Errors produced by the estimation library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("non-finite log posterior at observation index {index}")]
    NonFiniteLikelihood { index: usize },

    #[error("too few exceedances: {count} over threshold {threshold} (floor {floor})")]
    TooFewExceedances {
        count: usize,
        threshold: f64,
        floor: usize,
    },

    #[error("bisection bracket failure: {0}")]
    BracketFailure(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
