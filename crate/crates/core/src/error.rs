use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// An argument lies outside the domain of the function.
    #[error("domain error: {0}")]
    Domain(String),

    /// A kernel was asked for its value at a point where it diverges.
    #[error("kernel evaluated at singular point s = {s} (t = {t})")]
    Singular { t: f64, s: f64 },

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("expected a {expected} path, got {found}")]
    WrongProcess { expected: String, found: String },

    #[error("factorization failed: {0}")]
    Factorization(String),

    #[error("empty history: conditioning time u must be positive")]
    EmptyHistory,

    #[error("line {line}: {msg}")]
    Parse { line: u64, msg: String },

    #[error("i/o error: {0}")]
    Io(String),

    #[error("{0}")]
    Invalid(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn domain<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Domain(msg.into()))
}
