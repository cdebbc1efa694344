use std::path::Path;

use thiserror::Error;

/// Failures surfaced by a command, each tied to one process exit status.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Tolerance(String),
    #[error("{0}")]
    Usage(String),
    #[error("{path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Tolerance(_) => 1,
            CliError::Usage(_) => 2,
            CliError::Io { .. } => 3,
        }
    }

    pub fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.display().to_string(),
            source,
        }
    }
}

impl From<gbcosface_core::Error> for CliError {
    fn from(e: gbcosface_core::Error) -> Self {
        use gbcosface_core::Error as E;
        match e {
            E::NonFiniteLoss { .. } | E::NonFiniteInput(_) => CliError::Tolerance(e.to_string()),
            _ => CliError::Usage(e.to_string()),
        }
    }
}

pub type Result<T> = std::result::Result<T, CliError>;
