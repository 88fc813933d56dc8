use std::path::PathBuf;

/// Errors raised anywhere in the toolkit.
///
/// The variants are grouped by [`ErrorKind`] so command-line front ends can
/// map them onto stable exit codes.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("shape error: {0}")]
    Shape(String),
    #[error("numeric error: {0}")]
    Numeric(String),
    #[error("input error: {0}")]
    Input(String),
    #[error("config error: {0}")]
    Config(String),
    #[error("contract error: {0}")]
    Contract(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("rollout diverged at step {step}")]
    Divergence { step: usize },
    #[error("training failed: {0}")]
    Training(String),
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("schema error: {0}")]
    Schema(String),
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error("internal error: {0}")]
    Internal(String),
}

/// Coarse classification used for exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Usage,
    Data,
    Numeric,
}

impl Error {
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::Config(_) | Error::Contract(_) | Error::Input(_) => ErrorKind::Usage,
            Error::Shape(_)
            | Error::Parse { .. }
            | Error::Schema(_)
            | Error::Io { .. }
            | Error::Json(_)
            | Error::Internal(_) => ErrorKind::Data,
            Error::Numeric(_) | Error::Domain(_) | Error::Divergence { .. } | Error::Training(_) => ErrorKind::Numeric,
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
