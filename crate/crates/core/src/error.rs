use thiserror::Error;

/// Errors raised by the estimation engine.
#[derive(Debug, Error)]
pub enum Error {
    /// A caller supplied an argument outside the operation's domain.
    #[error("invalid argument: {0}")]
    Argument(String),

    /// A model, reference or target could not be built.
    #[error("construction failed: {0}")]
    Construction(String),

    /// The walk reached (or was asked to start from) a zero-density point.
    #[error("invalid chain state: {0}")]
    InvalidState(String),

    /// A criterion or moment function could not be evaluated.
    #[error("evaluation failed: {0}")]
    Evaluation(String),

    /// A numerical routine failed to produce a usable result.
    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn arg<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Argument(msg.into()))
}
