use thiserror::Error;

/// Errors raised while building or solving a problem instance.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum SolveError {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("invalid tree: {0}")]
    InvalidTree(String),

    #[error("energy is unbounded below ({0})")]
    Unbounded(String),

    #[error("breakpoint budget exceeded: {used} > {limit}")]
    BudgetExceeded { used: usize, limit: usize },
}

pub type Result<T> = std::result::Result<T, SolveError>;

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(SolveError::InvalidInput(msg.into()))
}
