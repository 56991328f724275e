//! Library surface of the operator tooling: configuration loading and the
//! in-process scenario pipeline. The `situ` binary is a thin wrapper over
//! these plus the serve/query/stressmap commands.

pub mod config;
pub mod pipeline;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("scenario error: {0}")]
    Scenario(String),
    #[error("bind failure: {0}")]
    Bind(String),
    #[error("corrupt-log at line {line}: {message}")]
    CorruptLog { line: usize, message: String },
    #[error("output error: {0}")]
    Output(String),
    #[error("internal error: {0}")]
    Internal(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Internal(_) => 1,
            CliError::Config(_) => 2,
            CliError::Scenario(_) => 3,
            CliError::Bind(_) => 4,
            CliError::CorruptLog { .. } => 5,
            CliError::Output(_) => 6,
        }
    }
}
