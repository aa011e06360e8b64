use thiserror::Error;

/// Errors raised by model construction, evaluation, training and the CLI.
#[derive(Debug, Error)]
pub enum Error {
    /// Inconsistent dimensions, invalid hyperparameters or malformed config.
    #[error("configuration error: {0}")]
    Config(String),

    /// A state outside the admissible set, or a parameter outside its domain.
    #[error("domain error: {0}")]
    Domain(String),

    /// Singular weight matrices, non-finite values, overflow.
    #[error("numeric error: {0}")]
    Numeric(String),

    /// The requested operation has no meaning for this problem instance.
    #[error("unsupported operation: {0}")]
    Unsupported(String),

    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn numeric(msg: impl Into<String>) -> Self {
        Error::Numeric(msg.into())
    }

    pub(crate) fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }
}
