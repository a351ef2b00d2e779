use std::path::PathBuf;
use std::process::ExitCode;

use thiserror::Error;
use tripleiv_core::error::Error as CoreError;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),

    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },

    #[error(transparent)]
    Domain(#[from] CoreError),

    /// A check failed and its details were already reported.
    #[error("{0}")]
    Failed(String),
}

impl CliError {
    pub fn io(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> CliError {
        let path = path.into();
        move |source| CliError::Io { path, source }
    }

    pub fn exit_code(&self) -> ExitCode {
        match self {
            CliError::Usage(_) | CliError::Io { .. } => ExitCode::from(2),
            CliError::Domain(CoreError::Io(_)) => ExitCode::from(2),
            CliError::Domain(CoreError::Csv(e)) if e.is_io_error() => ExitCode::from(2),
            CliError::Domain(_) | CliError::Failed(_) => ExitCode::from(1),
        }
    }
}
