use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Incompatible tensor or image shapes; `op` names the failing primitive or routine.
    #[error("{op}: shape mismatch: {detail}")]
    Shape { op: &'static str, detail: String },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("invalid data: {0}")]
    Data(String),

    /// A loss, gradient or iterate became non-finite or diverged.
    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("foam generator gave up after {attempts} placement attempts ({placed} voids placed)")]
    Placement { attempts: usize, placed: usize },

    #[error("SIRT residual increased for {consecutive} consecutive iterations")]
    Diverged {
        consecutive: usize,
        residuals: Vec<f64>,
    },

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed tensor container {path}: {reason}")]
    Container { path: PathBuf, reason: String },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn shape(op: &'static str, detail: impl Into<String>) -> Self {
        Error::Shape {
            op,
            detail: detail.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
