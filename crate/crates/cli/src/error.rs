use std::path::PathBuf;

use thiserror::Error;

use crate::config::ConfigError;

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),

    #[error("{path}: {message}")]
    Data { path: PathBuf, message: String },

    #[error("{0}")]
    Usage(String),

    #[error("cannot read {path}: {source}")]
    Read {
        path: PathBuf,
        source: std::io::Error,
    },

    #[error("cannot write {path}: {source}")]
    Write {
        path: PathBuf,
        source: std::io::Error,
    },

    #[error(transparent)]
    Core(#[from] concave_deconv::error::Error),
}

impl CliError {
    /// 0 success, 1 runtime failure, 2 bad input or configuration.
    pub fn exit_code(&self) -> u8 {
        use concave_deconv::error::Error as E;
        match self {
            CliError::Config(_)
            | CliError::Data { .. }
            | CliError::Usage(_)
            | CliError::Read { .. } => 2,
            CliError::Core(E::InvalidArgument(_) | E::Calibration(_)) => 2,
            CliError::Write { .. } | CliError::Core(_) => 1,
        }
    }
}
