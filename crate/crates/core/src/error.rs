use thiserror::Error;

/// Crate-wide error type. Variants map onto process exit codes: `Usage`,
/// `Config`, and `Dim` are caller mistakes (exit 1); `Data`, `Integrity`,
/// `Version`, and `Io` indicate bad or missing inputs (exit 2).
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dim(String),
    #[error("usage error: {0}")]
    Usage(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("integrity error: {0}")]
    Integrity(String),
    #[error("unsupported format version {found}, expected {expected}")]
    Version { found: u16, expected: u16 },
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn dim(msg: impl Into<String>) -> Self {
        Error::Dim(msg.into())
    }

    pub fn usage(msg: impl Into<String>) -> Self {
        Error::Usage(msg.into())
    }

    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub fn data(msg: impl Into<String>) -> Self {
        Error::Data(msg.into())
    }

    pub fn integrity(msg: impl Into<String>) -> Self {
        Error::Integrity(msg.into())
    }

    /// Exit code this error maps to at the CLI boundary.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Dim(_) | Error::Usage(_) | Error::Config(_) => 1,
            Error::Data(_) | Error::Integrity(_) | Error::Version { .. } | Error::Io(_) => 2,
        }
    }
}
