use std::io;
use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{op}: incompatible shapes {shapes:?}")]
    Shape { op: &'static str, shapes: Vec<Vec<usize>> },

    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("IOB2 violation at line {line}")]
    Iob2 { line: usize },

    #[error("invalid gold tags: {0}")]
    InvalidGold(String),

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("model file: {0}")]
    Model(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
}

/// Coarse failure class, used for process exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Category {
    Usage,
    DataFormat,
    Numeric,
}

impl Category {
    pub fn as_str(self) -> &'static str {
        match self {
            Category::Usage => "usage",
            Category::DataFormat => "data-format",
            Category::Numeric => "numeric",
        }
    }

    pub fn exit_code(self) -> i32 {
        match self {
            Category::Usage => 2,
            Category::DataFormat => 3,
            Category::Numeric => 4,
        }
    }
}

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub fn parse(line: usize, msg: impl Into<String>) -> Self {
        Error::Parse {
            line,
            msg: msg.into(),
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn category(&self) -> Category {
        match self {
            Error::Shape { .. } | Error::Numeric(_) => Category::Numeric,
            Error::InvalidArgument(_) => Category::Usage,
            Error::Io { source, .. } if source.kind() == io::ErrorKind::NotFound => Category::Usage,
            Error::Parse { .. }
            | Error::Iob2 { .. }
            | Error::InvalidGold(_)
            | Error::Model(_)
            | Error::Io { .. } => Category::DataFormat,
        }
    }
}
