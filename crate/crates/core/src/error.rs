use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("time {t} outside [0, {horizon}]")]
    TimeDomain { t: f64, horizon: f64 },

    #[error("shape mismatch: expected {expected}, got {actual}")]
    Shape { expected: String, actual: String },

    #[error("invalid sub-action index {index} (layout has {len})")]
    SubActionIndex { index: usize, len: usize },

    #[error("point ({x}, {y}) outside image {w}x{h}")]
    OutsideImage { x: f64, y: f64, w: usize, h: usize },

    #[error("degenerate window: {0}")]
    DegenerateWindow(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("scene sampling failed after {retries} retries")]
    SamplingExhausted { retries: usize },

    #[error("weight file format error at byte {offset}: {reason}")]
    Format { offset: usize, reason: String },

    #[error("unsupported weight file version {found:?} (expected {expected:?})")]
    Version { found: char, expected: char },

    #[error("unknown parameter `{0}`")]
    UnknownParam(String),

    #[error("empty batch")]
    EmptyBatch,

    #[error("loss diverged at step {step}: {value}")]
    Divergence { step: usize, value: f64 },

    #[error("non-finite action at inference step {step}")]
    NonFiniteAction {
        step: usize,
        trace: Box<crate::fddp::DenoiseTrace>,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
}

impl Error {
    pub(crate) fn shape(expected: impl ToString, actual: impl ToString) -> Self {
        Error::Shape {
            expected: expected.to_string(),
            actual: actual.to_string(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
