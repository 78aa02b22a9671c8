use thiserror::Error;

/// Errors produced by the library.
#[derive(Debug, Error)]
pub enum Error {
    /// Tensor or kernel shapes do not line up.
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    /// A parameter is outside its valid range.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// A backward pass was requested without a matching forward pass.
    #[error("backward called without a cached forward pass ({0})")]
    MissingForward(&'static str),

    /// A configuration file or JSON payload could not be parsed.
    #[error("config error: {0}")]
    Config(String),

    /// Training produced a non-finite loss.
    #[error("training diverged: {0}")]
    Diverged(String),

    /// An image file could not be read or written.
    #[error("image error: {0}")]
    Image(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Process exit code for the CLI: 1 for validation failures, 2 for IO.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Io(_) | Error::Image(_) => 2,
            _ => 1,
        }
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Config(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
