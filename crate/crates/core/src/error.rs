use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid radar configuration: {0}")]
    InvalidConfig(String),

    #[error("invalid pose: {0}")]
    InvalidPose(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("degenerate aperture: {0}")]
    DegenerateAperture(String),

    #[error("angle {0} rad is at the cos(theta) = 0 singularity")]
    Singularity(f64),

    #[error("unsupported array geometry: {0}")]
    UnsupportedGeometry(String),

    #[error("resource limit exceeded: {0}")]
    Resource(String),

    #[error("insufficient motion: path length {length} m is shorter than spacing {spacing} m")]
    InsufficientMotion { length: f64, spacing: f64 },

    #[error("metric undefined: {0}")]
    UndefinedMetric(String),

    #[error("training failed at epoch {epoch}: {reason}")]
    TrainingFailure { epoch: usize, reason: String },

    #[error("untrained model: {0}")]
    Untrained(String),

    #[error("usage: {0}")]
    Usage(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: parse error: {message}")]
    Parse { path: PathBuf, message: String },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(path: impl Into<PathBuf>, message: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            message: message.into(),
        }
    }

    /// True for errors that the CLI reports with the usage exit code.
    pub fn is_usage(&self) -> bool {
        matches!(self, Error::Usage(_))
    }
}
