use std::path::{Path, PathBuf};

use genshield_core::Error as CoreError;

/// Problems with input files, reported with enough context to find the cell.
#[derive(Debug, thiserror::Error)]
pub enum DataError {
    #[error("schema error in {file}: missing column '{column}'")]
    Schema { file: PathBuf, column: String },
    #[error("parse error at {file}:{line}: {detail}")]
    Parse { file: PathBuf, line: u64, detail: String },
    #[error("labeled-data error in {file}: {detail}")]
    Label { file: PathBuf, detail: String },
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{0}")]
    Invalid(String),
}

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("config error: {0}")]
    Config(String),
    #[error("missing dependency: {0}")]
    Dependency(String),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Core(#[from] CoreError),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Process exit codes. 2 is reserved for usage errors reported by the argument parser.
pub mod exit {
    pub const OK: i32 = 0;
    pub const INTERNAL: i32 = 1;
    pub const USAGE: i32 = 2;
    pub const CONFIG: i32 = 3;
    pub const DATA: i32 = 4;
    pub const TRAINING: i32 = 5;
    pub const MODEL_FILE: i32 = 6;
    pub const DEPENDENCY: i32 = 7;
}

impl Error {
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) => exit::CONFIG,
            Error::Dependency(_) => exit::DEPENDENCY,
            Error::Data(_) => exit::DATA,
            Error::Core(e) => match e {
                CoreError::Argument(_) | CoreError::Shape { .. } => exit::CONFIG,
                CoreError::Training { .. } | CoreError::Precondition(_) => exit::TRAINING,
                CoreError::Format(_)
                | CoreError::Version { .. }
                | CoreError::Corruption(_)
                | CoreError::Incompatible { .. } => exit::MODEL_FILE,
                CoreError::State(_) => exit::INTERNAL,
            },
        }
    }
}

pub(crate) fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| {
        Error::Data(DataError::Io {
            path: path.to_path_buf(),
            source,
        })
    }
}
