use std::path::Path;

use thiserror::Error;

pub type Result<T, E = CliError> = std::result::Result<T, E>;

/// Failures grouped by exit code.
#[derive(Debug, Error)]
pub enum CliError {
    /// Bad flags, unknown controllers or invalid configuration values.
    #[error("usage error: {0}")]
    Usage(String),

    /// Unreadable, unwritable or malformed files and out-of-domain data.
    #[error("data error: {0}")]
    Data(String),

    #[error("solver failure: {0}")]
    Solver(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Usage(_) => 2,
            Self::Data(_) => 3,
            Self::Solver(_) => 4,
        }
    }

    pub fn io(path: &Path, err: impl std::fmt::Display) -> Self {
        Self::Data(format!("{}: {err}", path.display()))
    }
}

impl From<mrv_core::Error> for CliError {
    fn from(err: mrv_core::Error) -> Self {
        use mrv_core::Error as E;
        match err {
            E::Controller { .. } => Self::Solver(err.to_string()),
            E::Config(_) | E::InvalidBattery(_) => Self::Usage(err.to_string()),
            _ => Self::Data(err.to_string()),
        }
    }
}
