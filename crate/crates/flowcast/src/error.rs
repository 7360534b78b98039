use std::io;
use thiserror::Error;

/// Errors produced by log parsing, encoding, the network, training, and I/O.
#[derive(Debug, Error)]
pub enum Error {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("event log contains no events")]
    EmptyLog,

    #[error("{0} requires non-empty input")]
    EmptyInput(&'static str),

    #[error("split fraction must lie strictly between 0 and 1, got {0}")]
    InvalidFraction(f64),

    #[error("chronological split requires at least 2 traces, log has {0}")]
    TooFewTraces(usize),

    #[error("training log has no inter-event gaps (no trace with 2 or more events)")]
    NoTimeGaps,

    #[error("mean inter-event time must be positive (all training gaps are zero)")]
    ZeroMeanDelta,

    #[error("unknown activity {0:?}: not in the training alphabet")]
    UnknownActivity(String),

    #[error("prefix length {k} out of range 2..={len}")]
    PrefixOutOfRange { k: usize, len: usize },

    #[error("dimension mismatch in {context}: expected {expected}, got {actual}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("non-finite gradient entry: training diverged")]
    NonFiniteGradient,

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("unsupported checkpoint format version {0}")]
    CheckpointVersion(u32),

    #[error("cannot read {path}: {source}")]
    ReadInput {
        path: String,
        #[source]
        source: io::Error,
    },

    #[error("malformed input {path}: {message}")]
    MalformedInput { path: String, message: String },

    #[error(transparent)]
    Io(#[from] io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
