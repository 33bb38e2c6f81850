use std::io;
use std::path::PathBuf;

use thiserror::Error;

use crate::config::ConfigError;

/// Everything `wgent` can fail with, grouped by exit code.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Config(#[from] ConfigError),

    #[error("invalid setting: {0}")]
    Invalid(String),

    #[error("numerical failure: {0}")]
    Numerical(wgent_core::Error),

    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: io::Error },
}

impl From<wgent_core::Error> for CliError {
    fn from(e: wgent_core::Error) -> Self {
        use wgent_core::Error::*;
        match e {
            NonFinite { .. } | SymplecticViolation { .. } | NonPhysical(_) | InvariantViolation(_) => {
                CliError::Numerical(e)
            }
            other => CliError::Invalid(other.to_string()),
        }
    }
}

impl CliError {
    pub fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        CliError::Io { path: path.into(), source }
    }

    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) | CliError::Invalid(_) => 2,
            CliError::Numerical(_) => 3,
            CliError::Io { .. } => 1,
        }
    }
}
