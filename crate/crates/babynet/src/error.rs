use std::path::{Path, PathBuf};

/// Process exit status for usage and validation failures.
pub const EXIT_USAGE: i32 = 2;
/// Process exit status for numeric failures (non-finite loss, failed
/// gradient check).
pub const EXIT_NUMERIC: i32 = 3;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{}: {msg}", path.display())]
    Parse { path: PathBuf, msg: String },
    #[error(transparent)]
    Core(#[from] babynet_core::Error),
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Numeric(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        Error::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    pub fn parse(path: &Path, msg: impl Into<String>) -> Self {
        Error::Parse {
            path: path.to_path_buf(),
            msg: msg.into(),
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Numeric(_) | Error::Core(babynet_core::Error::NonFinite(_)) => EXIT_NUMERIC,
            _ => EXIT_USAGE,
        }
    }
}
