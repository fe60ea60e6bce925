use thiserror::Error;

/// Errors raised by the homogenization pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("invalid specification: {}", .0.join("; "))]
    Validation(Vec<String>),
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error("not applicable: {0}")]
    NotApplicable(String),
    #[error("no convergence: {0}")]
    NonConvergence(String),
    #[error("refused: {0}")]
    Refused(String),
    #[error("solver failure: {0}")]
    SolverFailure(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn precondition<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Precondition(msg.into()))
}
