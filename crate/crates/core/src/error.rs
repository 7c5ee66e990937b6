use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("timestep {t} out of range {min}..={max}")]
    TimestepOutOfRange { t: usize, min: usize, max: usize },

    #[error("shape mismatch: expected {expected:?}, got {found:?}")]
    Shape {
        expected: (usize, usize),
        found: (usize, usize),
    },

    #[error("channel mismatch: denoiser expects {expected} input channels, got {found}")]
    Channels { expected: usize, found: usize },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("mask error: {0}")]
    Mask(String),

    #[error("phantom generation failed: {0}")]
    Generation(String),

    #[error("metric error: {0}")]
    Metric(String),

    #[error("training diverged at epoch {epoch}: loss {loss}")]
    Diverged { epoch: usize, loss: f64 },

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error(transparent)]
    Weights(#[from] WeightsError),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: malformed file: {reason}")]
    Format { path: PathBuf, reason: String },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(path: impl Into<PathBuf>, reason: impl Into<String>) -> Self {
        Error::Format {
            path: path.into(),
            reason: reason.into(),
        }
    }

    /// True for errors caused by user-supplied configuration rather than
    /// failures during computation.
    pub fn is_config(&self) -> bool {
        matches!(self, Error::Config(_) | Error::Parameter(_))
    }
}

/// Failures reading a tiny-denoiser weight file.
#[derive(Debug, Error, PartialEq)]
pub enum WeightsError {
    #[error("not a weight file (bad magic {0:?})")]
    BadMagic([u8; 4]),

    #[error("unsupported weight file version {found} (expected {expected})")]
    Version { found: u16, expected: u16 },

    #[error("weight file truncated: needed {needed} bytes, {available} available")]
    Truncated { needed: usize, available: usize },

    #[error("inconsistent shape table: {0}")]
    Shape(String),

    #[error("model expects {expected} input channels but file has {found}")]
    ChannelCount { expected: usize, found: usize },

    #[error("non-finite weight in tensor {0}")]
    NonFinite(&'static str),
}
