use thiserror::Error;

/// Errors shared across all simulation modules.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("step limit exceeded after {steps} steps at t = {t}")]
    StepLimitExceeded { steps: usize, t: f64 },
    #[error("non-finite state encountered at t = {t}")]
    NonFiniteState { t: f64 },
    #[error("count truncation leak {leak:.3e} exceeds limit {limit:.3e}")]
    TruncationLeak { leak: f64, limit: f64 },
    #[error("invalid observation: {0}")]
    InvalidObservation(String),
    #[error("invalid projection step: a*dt^2 = {0} must be < 1")]
    InvalidStep(f64),
    #[error("division by zero: {0}")]
    DivisionByZero(&'static str),
    #[error("fit failure: {0}")]
    FitFailure(String),
    #[error("config error: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
