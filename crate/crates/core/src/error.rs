use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid data: {0}")]
    InvalidData(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid direction: {0}")]
    InvalidDirection(String),

    #[error("numerical failure: {0}")]
    NumericalFailure(String),

    #[error("degenerate spectrum: every coordinate pair is (0, 0)")]
    DegenerateSpectrum,

    #[error("empty component selection: {0}")]
    EmptySelection(String),

    #[error("invalid weight {value} at index {index}: weights must lie in [0, 1]")]
    InvalidWeight { index: usize, value: f64 },

    #[error("invalid alpha {0}: must lie in [0, 1]")]
    InvalidAlpha(f64),

    #[error("invalid covariance: {0}")]
    InvalidCovariance(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: u64, message: String },

    #[error("schema error: {0}")]
    Schema(String),

    #[error("session error: {0}")]
    Session(String),

    #[error("protocol violation: {0}")]
    ProtocolViolation(String),

    #[error("transport error: {0}")]
    Transport(String),

    #[error("timed out: {0}")]
    Timeout(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
