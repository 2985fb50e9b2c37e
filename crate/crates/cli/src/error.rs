use std::process::ExitCode;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("invalid config: field `{field}`: {message}")]
    Config { field: String, message: String },
    #[error("invalid input: {0}")]
    Input(String),
    #[error("all {runs} runs failed; first error: {first}")]
    AllRunsFailed { runs: usize, first: String },
    #[error("{0}")]
    CheckFailed(String),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
}

impl CliError {
    /// 2 for configuration or input errors, 3 when every run aborted,
    /// 4 for failed checks, 1 for i/o failures.
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config { .. } | CliError::Input(_) => 2,
            CliError::AllRunsFailed { .. } => 3,
            CliError::CheckFailed(_) => 4,
            CliError::Io { .. } => 1,
        }
    }
}

impl From<&CliError> for ExitCode {
    fn from(e: &CliError) -> Self {
        ExitCode::from(e.exit_code())
    }
}
