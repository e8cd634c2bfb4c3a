use std::fmt;
use std::io;
use std::path::PathBuf;

/// Crate-wide error type.
#[derive(Debug)]
pub enum Error {
    /// Tensor dimensions do not fit the operation.
    Shape(String),
    /// A value outside the domain an operation accepts.
    InvalidArgument(String),
    /// NaN or infinity produced or consumed by an operation.
    NonFinite(String),
    /// Architecture string could not be parsed.
    Parse { position: usize, message: String },
    /// Parameter budget cannot be met by any legal width.
    BudgetTooSmall { budget: u64, minimum: u64 },
    /// I/O failure, tagged with the file involved.
    Io { path: PathBuf, source: io::Error },
    /// A file exists but its contents are malformed.
    Format { path: Option<PathBuf>, message: String },
    /// Transfer set and ensemble were produced by different teachers.
    FingerprintMismatch { expected: String, found: String },
    /// Training loss diverged; the run is abandoned.
    Diverged { epoch: usize, message: String },
    /// Stored search state does not describe the configured space.
    SpaceMismatch { expected: String, found: String },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn shape(msg: impl Into<String>) -> Self {
        Error::Shape(msg.into())
    }

    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn format(path: Option<PathBuf>, msg: impl Into<String>) -> Self {
        Error::Format {
            path,
            message: msg.into(),
        }
    }
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::Shape(m) => write!(f, "shape error: {m}"),
            Error::InvalidArgument(m) => write!(f, "invalid argument: {m}"),
            Error::NonFinite(m) => write!(f, "non-finite value: {m}"),
            Error::Parse { position, message } => {
                write!(f, "parse error at position {position}: {message}")
            }
            Error::BudgetTooSmall { budget, minimum } => write!(
                f,
                "parameter budget {budget} is below the smallest legal model ({minimum} parameters)"
            ),
            Error::Io { path, source } => write!(f, "{}: {source}", path.display()),
            Error::Format { path: Some(p), message } => write!(f, "{}: {message}", p.display()),
            Error::Format { path: None, message } => write!(f, "format error: {message}"),
            Error::FingerprintMismatch { expected, found } => write!(
                f,
                "ensemble fingerprint mismatch: expected {expected}, transfer set has {found}"
            ),
            Error::Diverged { epoch, message } => {
                write!(f, "training diverged at epoch {epoch}: {message}")
            }
            Error::SpaceMismatch { expected, found } => write!(
                f,
                "search space hash mismatch: configured {expected}, ledger has {found}"
            ),
        }
    }
}

impl std::error::Error for Error {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        match self {
            Error::Io { source, .. } => Some(source),
            _ => None,
        }
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::format(None, e.to_string())
    }
}
