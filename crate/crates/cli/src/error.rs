use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    /// Bad arguments or configuration; exit code 1.
    #[error("{0}")]
    Validation(String),

    /// Failure while running a valid command; exit code 2.
    #[error("{0}")]
    Runtime(String),

    #[error(transparent)]
    Core(#[from] svdd_cfar::error::Error),

    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) => 1,
            _ => 2,
        }
    }

    pub(crate) fn io(path: &std::path::Path, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.display().to_string(),
            source,
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;
