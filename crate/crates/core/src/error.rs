use std::path::PathBuf;

#[derive(Debug, thiserror::Error)]
pub enum DsmError {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("lag m = {lag} outside the valid range [1, {max}]")]
    LagOutOfRange { lag: usize, max: usize },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("unsupported channel layout: {0}")]
    ChannelLayout(String),

    #[error("{format} encode failed: {reason}")]
    Encode { format: &'static str, reason: String },

    #[error("{format} decode failed: {reason}")]
    Decode { format: &'static str, reason: String },

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{}: {reason}", path.display())]
    Format { path: PathBuf, reason: String },
}

impl DsmError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        DsmError::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(path: impl Into<PathBuf>, reason: impl Into<String>) -> Self {
        DsmError::Format {
            path: path.into(),
            reason: reason.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, DsmError>;
