use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{what}: expected length {expected}, got {got}")]
    Length {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("FM0 level sequence must have even length, got {0}")]
    OddLevelCount(usize),

    #[error("invalid image: {0}")]
    ImageShape(String),

    #[error("invalid hex string: {0}")]
    Hex(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("cutoff {cutoff_hz} Hz is not below the Nyquist frequency of {rate_hz} Hz sampling")]
    AboveNyquist { cutoff_hz: f64, rate_hz: f64 },

    #[error("tag waveform ends at {end_s} s but the buffer is only {buffer_s} s long")]
    WaveformOverrun { end_s: f64, buffer_s: f64 },

    #[error("buffer sample rate {got_hz} Hz does not match detector rate {expected_hz} Hz")]
    SampleRateMismatch { expected_hz: f64, got_hz: f64 },

    #[error("{path}: truncated capture, {len} bytes is not a multiple of the {stride}-byte sample stride (incomplete sample at byte offset {offset})")]
    TruncatedCapture {
        path: PathBuf,
        len: u64,
        stride: usize,
        offset: u64,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("configuration: {0}")]
    Config(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn param(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }
}
