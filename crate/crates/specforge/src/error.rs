use std::path::{Path, PathBuf};

use thiserror::Error;

/// Process exit codes of the command line tool.
pub mod exit {
    pub const OK: i32 = 0;
    pub const USAGE: i32 = 1;
    pub const IO: i32 = 2;
    pub const HOST_UNSUPPORTED: i32 = 3;
    pub const STAGE: i32 = 4;
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Data(String),
    #[error("host unsupported: {0}")]
    HostUnsupported(String),
    #[error("stage {stage} failed: {msg}")]
    Stage { stage: String, msg: String },
}

impl Error {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        Error::Io { path: path.to_path_buf(), source }
    }

    pub fn stage(stage: &str, msg: impl ToString) -> Self {
        Error::Stage { stage: stage.to_string(), msg: msg.to_string() }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Io { .. } => exit::IO,
            Error::Usage(_) => exit::USAGE,
            Error::HostUnsupported(_) => exit::HOST_UNSUPPORTED,
            Error::Data(_) | Error::Stage { .. } => exit::STAGE,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
