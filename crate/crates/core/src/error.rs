use thiserror::Error;

/// Errors produced by the library.
#[derive(Debug, Error)]
pub enum Error {
    /// A category string failed to parse. `offset` is the byte position of
    /// the first offending byte.
    #[error("category parse error at byte {offset}: {message}")]
    CategoryParse { offset: usize, message: String },

    /// A corpus, embedding, or vocabulary file is malformed.
    #[error("{path}:{line}: {message}")]
    Data {
        path: String,
        line: usize,
        message: String,
    },

    /// A model file could not be read back (bad version, truncated payload,
    /// header inconsistent with the matrices that follow).
    #[error("model file error: {0}")]
    ModelFormat(String),

    /// Configuration values are inconsistent or out of range.
    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn data(path: impl Into<String>, line: usize, message: impl Into<String>) -> Self {
        Error::Data {
            path: path.into(),
            line,
            message: message.into(),
        }
    }

    pub fn config(message: impl Into<String>) -> Self {
        Error::Config(message.into())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
