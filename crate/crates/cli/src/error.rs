use std::path::{Path, PathBuf};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    /// Unreadable or malformed input; exit code 2.
    #[error("{}: {reason}", path.display())]
    Input { path: PathBuf, reason: String },
    /// Invalid configuration or arguments; exit code 2.
    #[error("{0}")]
    Usage(String),
    /// Training diverged; exit code 3.
    #[error("numeric failure: {0}")]
    Numeric(String),
    /// Failure writing outputs; exit code 1.
    #[error("{}: {source}", path.display())]
    Output { path: PathBuf, source: std::io::Error },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Input { .. } | CliError::Usage(_) => 2,
            CliError::Numeric(_) => 3,
            CliError::Output { .. } => 1,
        }
    }

    pub fn input(path: &Path, reason: impl ToString) -> Self {
        CliError::Input { path: path.to_path_buf(), reason: reason.to_string() }
    }

    pub fn output(path: &Path, source: impl Into<std::io::Error>) -> Self {
        CliError::Output { path: path.to_path_buf(), source: source.into() }
    }
}

pub type Result<T> = std::result::Result<T, CliError>;
