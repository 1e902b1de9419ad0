use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("empty signal")]
    EmptySignal,

    #[error("frame length {frame_len} exceeds signal length {len}")]
    SignalTooShort { frame_len: usize, len: usize },

    #[error("invalid frame parameters: {0}")]
    InvalidFrameParams(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid geometry: {0}")]
    InvalidGeometry(String),

    #[error("need at least 2 active channels, got {0}")]
    TooFewChannels(usize),

    #[error("noise context is empty")]
    EmptyContext,

    #[error("regularized noise covariance is singular at bin {bin}; raise the diagonal loading")]
    SingularCovariance { bin: usize },

    #[error("no valid microphone pair")]
    NoValidPairs,

    #[error("spectrum carries no phase information (all-zero cross spectra)")]
    NoPhaseInformation,

    #[error("invalid DoA grid: {0}")]
    InvalidGrid(String),

    #[error("internal consistency check failed: {0}")]
    Consistency(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("sample rate mismatch: file has {found} Hz, configured {expected} Hz")]
    SampleRateMismatch { expected: u32, found: u32 },

    #[error("noise context [{start:.3}, {end:.3}] s is outside the file (duration {duration:.3} s)")]
    ContextOutOfBounds { start: f64, end: f64, duration: f64 },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {source}")]
    Wav {
        path: PathBuf,
        #[source]
        source: hound::Error,
    },

    #[error("unsupported WAV format: {0}")]
    UnsupportedWav(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
