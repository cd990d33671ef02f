use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("problem is infeasible: {0}")]
    Infeasible(String),
    #[error("problem is unbounded")]
    Unbounded,
    #[error("iteration limit reached after {0} iterations")]
    IterationLimit(usize),
    #[error("branch-and-bound node limit ({0}) reached")]
    NodeLimit(usize),
    #[error("lemke terminated on a secondary ray")]
    RayTermination,
    #[error("singular or indefinite matrix: {0}")]
    Singular(String),
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::InvalidInput(msg.into()))
}
