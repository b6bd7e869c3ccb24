use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch in {op}: {left} vs {right}")]
    Shape {
        op: &'static str,
        left: String,
        right: String,
    },

    #[error("non-finite value encountered in {0}")]
    NonFinite(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("empty input: {0}")]
    Empty(String),

    #[error("duplicate key {key} in {source_name}")]
    DuplicateKey { key: String, source_name: String },

    #[error("missing required column `{column}` in {path}")]
    MissingColumn { column: String, path: PathBuf },

    #[error("unknown feature `{0}`")]
    UnknownFeature(String),

    #[error("feature dimension mismatch: checkpoint expects {expected}, data provides {found}")]
    FeatureDim { expected: usize, found: usize },

    #[error("horizon mismatch: checkpoint was trained for {checkpoint}h, requested {requested}h")]
    Horizon { checkpoint: usize, requested: usize },

    #[error("training diverged at epoch {epoch}, batch {batch}: loss = {loss}")]
    Diverged { epoch: usize, batch: usize, loss: f64 },

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error("unsupported checkpoint version: found {found}, expected {expected}")]
    Version { found: u32, expected: u32 },

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("config: {0}")]
    Config(String),

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn shape(op: &'static str, left: impl ToString, right: impl ToString) -> Self {
        Error::Shape {
            op,
            left: left.to_string(),
            right: right.to_string(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
