use thiserror::Error;

/// Failure of a run, split by what the caller should do about it.
#[derive(Debug, Error)]
pub enum RunError {
    /// Bad flags, bad config, or an output directory that must not be touched.
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Runtime(String),
}

impl RunError {
    pub fn usage(msg: impl Into<String>) -> Self {
        RunError::Usage(msg.into())
    }

    pub fn runtime(msg: impl Into<String>) -> Self {
        RunError::Runtime(msg.into())
    }

    pub fn exit_code(&self) -> u8 {
        match self {
            RunError::Usage(_) => crate::EXIT_USAGE,
            RunError::Runtime(_) => crate::EXIT_RUNTIME,
        }
    }
}

impl From<sgl_core::Error> for RunError {
    fn from(e: sgl_core::Error) -> Self {
        RunError::Runtime(e.to_string())
    }
}

impl From<std::io::Error> for RunError {
    fn from(e: std::io::Error) -> Self {
        RunError::Runtime(format!("io error: {e}"))
    }
}

impl From<csv::Error> for RunError {
    fn from(e: csv::Error) -> Self {
        RunError::Runtime(format!("csv error: {e}"))
    }
}

pub type RunResult<T> = std::result::Result<T, RunError>;
