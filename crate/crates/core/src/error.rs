use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum GqaError {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("parse error in {path} at line {line}: {msg}")]
    Parse { path: PathBuf, line: usize, msg: String },
    #[error("empty point cloud")]
    EmptyCloud,
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("point cloud has no normals")]
    MissingNormals,
    #[error("distortion {0} is external-only and cannot be generated")]
    ExternalOnlyDistortion(String),
    #[error("unknown distortion type {0:?}")]
    UnknownDistortion(String),
    #[error("correlation undefined: {0}")]
    UndefinedCorrelation(&'static str),
    #[error("manifest error: {0}")]
    Manifest(String),
    #[error("checkpoint error: {0}")]
    Checkpoint(String),
    #[error("staging error: {0}")]
    Staging(String),
    #[error("config error: {0}")]
    Config(String),
}

impl GqaError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        GqaError::Io { path: path.into(), source }
    }

    /// True for errors caused by a missing upstream training stage.
    pub fn is_staging(&self) -> bool {
        matches!(self, GqaError::Staging(_))
    }

    /// True for errors caused by invalid user-supplied options.
    pub fn is_usage(&self) -> bool {
        matches!(self, GqaError::Config(_) | GqaError::UnknownDistortion(_))
    }
}

pub type Result<T, E = GqaError> = std::result::Result<T, E>;
