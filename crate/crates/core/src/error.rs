//! Error type shared by every module of the crate.

use std::path::PathBuf;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// Malformed or unsupported NIfTI header; `field` names the offending header field.
    #[error("nifti header field `{field}`: {message}")]
    Nifti { field: &'static str, message: String },

    #[error("{path}: {message}")]
    Table { path: PathBuf, message: String },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("degenerate map: {0}")]
    DegenerateMap(String),

    #[error("degenerate series: {0}")]
    DegenerateSeries(String),

    #[error("rank deficient design (smallest/largest singular value = {ratio:e})")]
    RankDeficient { ratio: f64 },

    #[error("infinite PSNR: images are identical within the mask")]
    InfinitePsnr,

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn nifti(field: &'static str, message: impl Into<String>) -> Self {
        Error::Nifti {
            field,
            message: message.into(),
        }
    }
}
