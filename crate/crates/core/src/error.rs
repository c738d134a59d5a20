use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("parse error in {context} at line {line}, column {column}: {message}")]
    Parse {
        context: String,
        line: usize,
        column: usize,
        message: String,
    },

    #[error("unsupported WFDB storage format {0} (only format 212 is supported)")]
    UnsupportedFormat(u16),

    #[error("truncated signal data: expected at least {expected} bytes, found {actual}")]
    TruncatedSignal { expected: usize, actual: usize },

    #[error("annotation at sample {index} lies outside the record ({num_samples} samples)")]
    OutOfRangeAnnotation { index: u64, num_samples: usize },

    #[error("signal checksum mismatch on channel {channel}: header says {expected}, data gives {actual}")]
    ChecksumMismatch {
        channel: usize,
        expected: i16,
        actual: i16,
    },

    #[error("record too short: {needed} samples needed, {available} available")]
    RecordTooShort { needed: usize, available: usize },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("detector error: {0}")]
    Detector(String),

    #[error("undefined metric: {0}")]
    Undefined(String),

    /// Any of the above, raised while reading `path`.
    #[error("{path}: {source}")]
    InFile {
        path: PathBuf,
        #[source]
        source: Box<Error>,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn parse(
        context: impl Into<String>,
        line: usize,
        column: usize,
        message: impl Into<String>,
    ) -> Self {
        Error::Parse {
            context: context.into(),
            line,
            column,
            message: message.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn in_file(path: impl Into<PathBuf>) -> impl FnOnce(Error) -> Error {
        let path = path.into();
        move |e| match e {
            Error::Io { .. } | Error::InFile { .. } => e,
            other => Error::InFile {
                path,
                source: Box::new(other),
            },
        }
    }

    /// The underlying error with any file context removed.
    pub fn root(&self) -> &Error {
        match self {
            Error::InFile { source, .. } => source.root(),
            other => other,
        }
    }

    /// True when the error was caused by bad input (files, flags, config)
    /// rather than an internal failure.
    pub fn is_input_error(&self) -> bool {
        !matches!(self.root(), Error::Detector(_))
    }
}
