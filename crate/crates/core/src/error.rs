use std::path::PathBuf;

/// Errors produced by the library.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("format error in {path}: {message}")]
    Format { path: PathBuf, message: String },
    #[error("invalid argument: {0}")]
    Argument(String),
    #[error("configuration error: {0}")]
    Config(String),
    /// Failure while processing a frame; `index` is the 0-based position in the run.
    #[error("frame {index}: {source}")]
    Frame {
        index: usize,
        #[source]
        source: Box<Error>,
    },
    #[error("pipeline worker failed: {0}")]
    Worker(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(path: impl Into<PathBuf>, message: impl Into<String>) -> Self {
        Error::Format {
            path: path.into(),
            message: message.into(),
        }
    }

    pub(crate) fn at_frame(self, index: usize) -> Self {
        match self {
            e @ Error::Frame { .. } => e,
            e => Error::Frame {
                index,
                source: Box::new(e),
            },
        }
    }
}

/// Returns an argument error unless both dimensions agree.
pub(crate) fn check_dims(what: &str, expected: (usize, usize), got: (usize, usize)) -> Result<()> {
    if expected != got {
        return Err(Error::Argument(format!(
            "{what}: dimension mismatch, expected {}x{} got {}x{}",
            expected.0, expected.1, got.0, got.1
        )));
    }
    Ok(())
}
