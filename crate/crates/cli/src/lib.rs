//! Configuration, subcommands and output plumbing for the `leray` binary.

pub mod commands;
pub mod config;

use std::process::ExitCode;

pub use commands::{covariance, girsanov_compare, simulate, validate_field, Outcome};
pub use config::{parse_config, InitCondition, Observable, Parsed, SimConfig};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("config line {line}: {msg}")]
    Config { line: usize, msg: String },
    #[error("refused: {0}")]
    Refused(String),
    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Core(#[from] leray_alpha::Error),
}

impl CliError {
    pub fn config(line: usize, msg: impl Into<String>) -> Self {
        CliError::Config { line, msg: msg.into() }
    }

    pub fn io(context: impl Into<String>, source: std::io::Error) -> Self {
        CliError::Io { context: context.into(), source }
    }

    /// 2 for anything the user can fix by changing the invocation, 1 otherwise.
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) | CliError::Config { .. } | CliError::Refused(_) => 2,
            CliError::Core(leray_alpha::Error::Parse { .. } | leray_alpha::Error::InvalidParameter(_)) => 2,
            CliError::Io { .. } | CliError::Core(_) => 1,
        }
    }
}

impl From<&CliError> for ExitCode {
    fn from(e: &CliError) -> Self {
        ExitCode::from(e.exit_code())
    }
}
