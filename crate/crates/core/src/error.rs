use std::path::PathBuf;

use thiserror::Error;

/// Errors surfaced by the library.
#[derive(Debug, Error)]
pub enum Error {
    /// A caller broke an operation's precondition (shape, rank, divisibility).
    #[error("contract violation: {0}")]
    Contract(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("format error: {0}")]
    Format(#[from] FormatError),

    #[error("region statistics are degenerate: standard deviation {std:e} over {count} voxels")]
    ZeroStd { std: f64, count: usize },

    #[error("non-finite gradient in parameter `{param}`")]
    NonFiniteGradient { param: String },

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("empty dataset: {0}")]
    EmptyDataset(String),

    #[error("index out of range: {0}")]
    OutOfRange(String),

    /// Another error raised while processing a particular file.
    #[error("{path}: {source}")]
    InFile {
        path: PathBuf,
        #[source]
        source: Box<Error>,
    },
}

/// Malformed or unsupported file contents.
#[derive(Debug, Error, PartialEq)]
pub enum FormatError {
    #[error("bad magic: {0}")]
    BadMagic(String),
    #[error("unsupported datatype: {0}")]
    UnsupportedDatatype(String),
    #[error("truncated payload: expected {expected} bytes, found {found}")]
    Truncated { expected: usize, found: usize },
    #[error("payload length mismatch: expected {expected} bytes, found {found}")]
    LengthMismatch { expected: usize, found: usize },
    #[error("header parse failure: {0}")]
    Header(String),
    #[error("fortran-ordered arrays are not supported")]
    FortranOrder,
    #[error("mask value {0} is not binary")]
    NonBinaryMask(f64),
    #[error("value {0} overflows half precision")]
    HalfOverflow(f64),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Process exit codes used by the command-line front end.
pub mod exit_code {
    pub const SUCCESS: i32 = 0;
    pub const CONFIG: i32 = 2;
    pub const DATA: i32 = 3;
    pub const NUMERIC: i32 = 4;
}

impl Error {
    pub(crate) fn contract(msg: impl Into<String>) -> Self {
        Error::Contract(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Tags the error with the file being processed; I/O errors already
    /// carry a path and are returned unchanged.
    pub fn in_file(self, path: impl Into<PathBuf>) -> Self {
        match self {
            e @ (Error::Io { .. } | Error::InFile { .. }) => e,
            e => Error::InFile {
                path: path.into(),
                source: Box::new(e),
            },
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::Contract(_) => exit_code::CONFIG,
            Error::Io { .. } | Error::Format(_) | Error::EmptyDataset(_) | Error::OutOfRange(_) => exit_code::DATA,
            Error::ZeroStd { .. } | Error::NonFiniteGradient { .. } | Error::Numeric(_) => exit_code::NUMERIC,
            Error::InFile { source, .. } => source.exit_code(),
        }
    }
}
