use std::path::PathBuf;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{location}{message}")]
    Config { location: String, message: String },
    #[error("no checkpoint at {}", .0.display())]
    CheckpointNotFound(PathBuf),
    #[error("{0}")]
    Core(#[from] ddonet::Error),
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type CliResult<T> = std::result::Result<T, CliError>;

impl CliError {
    pub fn code(&self) -> &'static str {
        match self {
            CliError::Config { .. } => "ConfigError",
            CliError::CheckpointNotFound(_) => "CheckpointNotFoundError",
            CliError::Core(e) => e.code(),
            CliError::Io { .. } => "IoError",
        }
    }

    pub fn config(message: impl Into<String>) -> Self {
        CliError::Config {
            location: String::new(),
            message: message.into(),
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.into(),
            source,
        }
    }

    /// `CODE: detail` on one line.
    pub fn line(&self) -> String {
        let detail = self.to_string().replace(['\n', '\r'], " ");
        format!("{}: {}", self.code(), detail)
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Core(e.into())
    }
}
