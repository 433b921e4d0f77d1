use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by the keyword spotting pipeline.
#[derive(Debug, Error)]
pub enum KwsError {
    #[error("I/O error on {path}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed header: {0}")]
    MalformedHeader(String),

    #[error("payload mismatch: expected {expected} values, found {found} (stopped at frame {frame}, state {state})")]
    PayloadMismatch {
        expected: usize,
        found: usize,
        frame: usize,
        state: usize,
    },

    #[error("non-finite value {value} at frame {frame}, state {state}")]
    NonFinite { frame: usize, state: usize, value: f32 },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid state map: {0}")]
    InvalidStateMap(String),

    #[error("{file}:{line}: {message}")]
    Parse {
        file: String,
        line: usize,
        message: String,
    },

    #[error("keyword {form:?} has {found} phones, fewer than the minimum {min}")]
    TooFewPhones { form: String, found: usize, min: usize },

    #[error("unknown phone symbol {symbol:?}{}", .line.map(|l| format!(" on line {l}")).unwrap_or_default())]
    UnknownPhone { symbol: String, line: Option<usize> },

    #[error("duplicate keyword form {0:?}")]
    DuplicateKeyword(String),

    #[error("invalid inventory: {0}")]
    InvalidInventory(String),

    #[error("decoder needs at least one unit")]
    NoUnits,

    #[error("state id {state} out of range for {num_states} likelihood columns")]
    StateOutOfRange { state: u32, num_states: usize },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("zero-duration span at frame {0}")]
    ZeroDuration(usize),

    #[error("degenerate calibration set: {0}")]
    DegenerateCalibration(String),

    #[error("synthesis error: {0}")]
    Synthesis(String),

    #[error("cache truncated at frame {frame} of {num_frames}")]
    TruncatedCache { frame: usize, num_frames: usize },

    #[error("cache fingerprint mismatch: cache was written for model {cached}, current model is {current}")]
    FingerprintMismatch { cached: String, current: String },

    #[error("evaluation error: {0}")]
    Evaluation(String),
}

pub type Result<T> = std::result::Result<T, KwsError>;

impl KwsError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        KwsError::Io {
            path: path.into(),
            source,
        }
    }
}
