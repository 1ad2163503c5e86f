use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("could not place {k} sources with minimum separation {min_separation} after {draws} draws")]
    Infeasible {
        k: usize,
        min_separation: f64,
        draws: usize,
    },

    #[error("cutoff {cutoff} exceeds the Nyquist frequency {nyquist} for pixel width {delta}")]
    AboveNyquist { cutoff: f64, nyquist: f64, delta: f64 },

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("point count mismatch: {est} estimated vs {truth} reference")]
    CountMismatch { est: usize, truth: usize },

    #[error("alignment searches all permutations and supports at most {max} points, got {k}")]
    TooManyPoints { k: usize, max: usize },

    #[error("density is identically zero")]
    ZeroDensity,

    #[error("cannot extract {k} centers: {reason}")]
    Extraction { k: usize, reason: String },

    #[error("objective became non-finite in restart {restart} at iteration {iteration}")]
    NonFinite { restart: usize, iteration: usize },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: malformed file: {reason}")]
    Format { path: PathBuf, reason: String },

    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn format(path: impl Into<PathBuf>, reason: impl Into<String>) -> Self {
        Error::Format {
            path: path.into(),
            reason: reason.into(),
        }
    }

    pub(crate) fn param(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }
}
