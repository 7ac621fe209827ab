use thiserror::Error;

/// Failures surfaced by the command-line tool, each mapped to an exit status.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration: {0}")]
    Config(String),

    #[error(transparent)]
    Core(#[from] qbayes::Error),

    #[error("output: {0}")]
    Output(#[from] std::io::Error),

    #[error("output: {0}")]
    Json(#[from] serde_json::Error),

    #[error("output: {0}")]
    Csv(#[from] csv::Error),
}

impl CliError {
    /// 1 for anything the user can fix by changing inputs, 2 for numerical
    /// failures during the run.
    pub fn exit_code(&self) -> u8 {
        use qbayes::Error as E;
        match self {
            CliError::Core(E::Numerical(_) | E::InvalidState(_) | E::Evaluation(_)) => 2,
            _ => 1,
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;

pub fn config_err<T>(msg: impl Into<String>) -> CliResult<T> {
    Err(CliError::Config(msg.into()))
}
