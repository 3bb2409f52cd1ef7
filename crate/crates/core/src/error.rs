use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("width mismatch: {left} bits vs {right} bits")]
    WidthMismatch { left: usize, right: usize },

    #[error("{what} {value} out of range (limit {limit})")]
    OutOfRange {
        what: &'static str,
        value: usize,
        limit: usize,
    },

    #[error("invalid geometry: {0}")]
    Geometry(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("no free bucket available ({live} live of {buckets} buckets)")]
    Capacity { live: usize, buckets: usize },

    #[error("device-resident index is full ({slots} slots)")]
    IndexFull { slots: usize },

    #[error("key {0} already present")]
    DuplicateKey(String),

    #[error("key {0} not found")]
    MissingKey(String),

    #[error("bucket {0} is not live")]
    NotLive(usize),

    #[error("cannot fit {k} clusters on {distinct} distinct samples")]
    TooFewDistinct { k: usize, distinct: usize },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("malformed input: {0}")]
    Format(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code used by the CLI: 2 config/usage, 3 capacity, 4 io.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Capacity { .. } | Error::IndexFull { .. } => 3,
            Error::Io { .. } | Error::Format(_) | Error::Csv(_) => 4,
            _ => 2,
        }
    }
}
