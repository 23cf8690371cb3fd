use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, got {got}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("invalid topology: {0}")]
    InvalidTopology(String),

    #[error("no connected graph with n={n}, edge_prob={edge_prob} after {attempts} samples")]
    ConnectivityFailure {
        n: usize,
        edge_prob: f64,
        attempts: usize,
    },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("code {code} out of range for {levels} quantization levels")]
    CodeOutOfRange { code: u32, levels: u32 },

    #[error("{operation} supports only the squared loss, got {loss}")]
    UnsupportedLoss {
        operation: &'static str,
        loss: String,
    },

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error: {0}")]
    Parse(String),

    #[error("dataset has no usable rows")]
    EmptyDataset,

    #[error("need at least {required} samples, have {available}")]
    TooFewSamples { available: usize, required: usize },

    #[error("regret is not strictly positive at checkpoint T={checkpoint} (R={value})")]
    DegenerateRegret { checkpoint: usize, value: f64 },

    #[error("config error at `{field}`: {message}")]
    Config { field: String, message: String },

    #[error("experiments differ in shared field `{field}`")]
    MismatchedExperiment { field: String },

    #[error("fixture hash mismatch: stored {stored}, current {current}")]
    HashMismatch { stored: String, current: String },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn config(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            field: field.into(),
            message: message.into(),
        }
    }
}

pub(crate) fn check_len(context: &'static str, expected: usize, got: usize) -> Result<()> {
    if expected != got {
        return Err(Error::DimensionMismatch {
            context,
            expected,
            got,
        });
    }
    Ok(())
}
