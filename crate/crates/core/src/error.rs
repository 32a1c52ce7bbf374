use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("mode index {mode} out of range for a {modes}-mode state")]
    ModeOutOfRange { mode: usize, modes: usize },

    #[error("length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },

    #[error("invalid permutation: {0}")]
    InvalidPermutation(String),

    #[error("degenerate marginal variance {0} (must be > 0)")]
    DegenerateVariance(f64),

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("covariance matrix is not positive semi-definite (smallest eigenvalue {0})")]
    NotPositiveSemidefinite(f64),

    #[error("invalid scheme parameters: {0}")]
    InvalidParams(String),

    #[error("malformed attack: {0}")]
    MalformedAttack(String),

    #[error("invalid experiment config: {0}")]
    InvalidConfig(String),

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("bad cipher-state encoding: {0}")]
    Decode(String),

    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
