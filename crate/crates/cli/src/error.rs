use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{0}")]
    Usage(String),

    #[error("cannot read {path}: {source}")]
    Read { path: PathBuf, source: std::io::Error },

    #[error("malformed sample file: {0}")]
    Csv(#[from] csv::Error),

    #[error("malformed sample file: {0}")]
    Format(String),

    #[error("cannot write output: {0}")]
    Write(#[from] std::io::Error),

    #[error(transparent)]
    Core(#[from] tdep::Error),
}

impl Error {
    /// Process exit status: 1 usage, 2 data, 3 capacity, 4 numeric.
    pub fn exit_code(&self) -> i32 {
        use tdep::ErrorKind;
        match self {
            Error::Usage(_) => 1,
            Error::Read { .. } | Error::Csv(_) | Error::Format(_) | Error::Write(_) => 2,
            Error::Core(e) => match e.kind() {
                ErrorKind::Usage => 1,
                ErrorKind::Data => 2,
                ErrorKind::Capacity => 3,
                ErrorKind::Numeric => 4,
            },
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
