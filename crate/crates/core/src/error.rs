use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch in {context}: expected {expected}, got {actual}")]
    Shape {
        context: String,
        expected: usize,
        actual: usize,
    },

    #[error("index {index} out of range for table {table} ({rows} rows)")]
    IndexOutOfRange {
        table: usize,
        index: usize,
        rows: usize,
    },

    #[error("lba {lba} outside provisioned range of {provisioned} lbas")]
    LbaOutOfRange { lba: u64, provisioned: u64 },

    #[error("invalid parameter: {0}")]
    InvalidParam(String),

    #[error("invalid extent layout: {0}")]
    Extent(String),

    #[error("kernel ({kr}, {kc}) does not fit layer {layer} ({rows} x {cols})")]
    Kernel {
        layer: String,
        kr: usize,
        kc: usize,
        rows: usize,
        cols: usize,
    },

    #[error("schedule violates {0}")]
    Schedule(String),

    #[error("no feasible kernel assignment up to batch {max_batch}: {binding}")]
    Infeasible { max_batch: usize, binding: String },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn param(msg: impl Into<String>) -> Self {
        Error::InvalidParam(msg.into())
    }

    pub(crate) fn shape(context: impl Into<String>, expected: usize, actual: usize) -> Self {
        Error::Shape {
            context: context.into(),
            expected,
            actual,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
