use std::io;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("solver failure: {0}")]
    Solver(helmscat_core::Error),

    #[error("{context}: {source}")]
    Io { context: String, source: io::Error },

    #[error("malformed input {path}: {message}")]
    Format { path: String, message: String },
}

impl CliError {
    pub fn config(msg: impl Into<String>) -> Self {
        CliError::Config(msg.into())
    }

    pub fn io(context: impl Into<String>, source: io::Error) -> Self {
        CliError::Io {
            context: context.into(),
            source,
        }
    }

    /// 2 for configuration errors, 3 for solver failures, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Solver(_) => 3,
            CliError::Io { .. } | CliError::Format { .. } => 1,
        }
    }
}

impl From<helmscat_core::Error> for CliError {
    fn from(e: helmscat_core::Error) -> Self {
        use helmscat_core::Error as E;
        match e {
            E::Breakdown { .. } | E::NotConverged { .. } | E::SeriesNotConverged { .. } | E::Singular(_) => {
                CliError::Solver(e)
            }
            other => CliError::Config(other.to_string()),
        }
    }
}
