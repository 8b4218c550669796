use std::io;
use std::path::PathBuf;

use thiserror::Error;

use crate::config::ConfigError;

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),

    /// A library call failed; `stage` names the step of the run.
    #[error("{stage} failed: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: singular_bsde::Error,
    },

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },

    #[error("{}: {source}", path.display())]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },

    #[error("missing artifact {}", .0.display())]
    MissingArtifact(PathBuf),

    #[error("{}: {message}", path.display())]
    Malformed { path: PathBuf, message: String },
}

pub type Result<T> = std::result::Result<T, CliError>;

/// Attach a stage name to a library result.
pub(crate) fn stage<T>(stage: &'static str, r: singular_bsde::Result<T>) -> Result<T> {
    r.map_err(|source| CliError::Stage { stage, source })
}

pub(crate) fn io_at<T>(path: impl Into<PathBuf>, r: io::Result<T>) -> Result<T> {
    r.map_err(|source| CliError::Io { path: path.into(), source })
}
