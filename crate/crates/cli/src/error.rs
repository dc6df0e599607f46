use std::path::PathBuf;

use rdsens_core::ErrorKind;
use serde_json::json;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] rdsens_core::Error),
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{0}")]
    Config(String),
    #[error("{0}")]
    Usage(String),
    /// Validation ran to completion and reported failures.
    #[error("{0} invariant check(s) failed")]
    ChecksFailed(usize),
}

pub type CliResult<T> = std::result::Result<T, CliError>;

impl CliError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io { path: path.into(), source }
    }

    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Core(e) => match e.kind() {
                ErrorKind::Config => 2,
                ErrorKind::Numerical => 3,
            },
            CliError::Io { .. } | CliError::Config(_) | CliError::Usage(_) => 2,
            CliError::ChecksFailed(_) => 3,
        }
    }

    pub fn tag(&self) -> &'static str {
        match self {
            CliError::Core(e) => e.root().tag(),
            CliError::Io { .. } => "io",
            CliError::Config(_) => "invalid-config",
            CliError::Usage(_) => "usage",
            CliError::ChecksFailed(_) => "validation-failed",
        }
    }

    pub fn to_json(&self) -> String {
        json!({ "error": self.tag(), "message": self.to_string() }).to_string()
    }
}
