use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by the analysis toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("directory not found: {0}")]
    MissingDirectory(PathBuf),

    #[error("zero readable images in {0}")]
    NoImages(PathBuf),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("eigen solver did not converge after {0} iterations")]
    NoConvergence(usize),

    #[error("embedding provider failed: {0}")]
    Provider(String),

    #[error("incomplete prime coverage: {0}")]
    IncompleteCoverage(String),

    #[error("run {stage} first: {} not found", path.display())]
    MissingArtifact { stage: String, path: PathBuf },

    #[error("malformed record at line {line}: {detail}")]
    Malformed { line: usize, detail: String },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
