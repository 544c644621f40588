use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {op}: {left:?} vs {right:?}")]
    Shape {
        op: &'static str,
        left: Vec<usize>,
        right: Vec<usize>,
    },

    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("{path}: bad magic number, expected {expected:#010x}, found {actual:#010x}")]
    Format {
        path: PathBuf,
        expected: u32,
        actual: u32,
    },

    #[error("{path}: truncated file, expected {expected} bytes, found {actual}")]
    Length {
        path: PathBuf,
        expected: usize,
        actual: usize,
    },

    #[error("inconsistent data: {0}")]
    Consistency(String),

    #[error("malformed program: {0}")]
    MalformedProgram(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(context: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            context: context.into(),
            source,
        }
    }
}
