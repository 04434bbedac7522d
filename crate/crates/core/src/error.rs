use std::path::PathBuf;

/// Errors produced by this crate.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// A `.cf32` payload whose byte length is not a whole number of
    /// interleaved I/Q records.
    #[error("{path}: {len} bytes is not a whole number of 8-byte cf32 records")]
    TruncatedFile { path: PathBuf, len: u64 },

    /// NaN or infinity encountered where only finite samples are admitted.
    #[error("non-finite sample at index {index}")]
    NonFinite { index: usize },

    #[error("metadata error for {path}: {message}")]
    Meta { path: PathBuf, message: String },

    #[error("invalid template: {0}")]
    InvalidTemplate(String),

    #[error("invalid detector config: {0}")]
    InvalidConfig(String),

    #[error("invalid scene: {0}")]
    InvalidScene(String),

    #[error("invalid frame: {0}")]
    InvalidFrame(String),

    #[error("{0}")]
    InvalidInput(String),
}

impl Error {
    /// True when the error stems from the filesystem rather than from
    /// validation of inputs. Callers use this to pick exit codes.
    pub fn is_io(&self) -> bool {
        matches!(self, Error::Io { .. })
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
