use thiserror::Error;

/// Errors raised across the simulator, metrics and learners.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid value for `{field}`: {reason}")]
    Validation { field: String, reason: String },

    #[error("index {index} out of range (expected 0..{len})")]
    Index { index: usize, len: usize },

    #[error("simulation diverged at t = {sim_time} s")]
    SimulationDiverged { sim_time: f64 },

    #[error("simulation diverged at t = {sim_time} s under gait {params:?}")]
    GaitDiverged { params: crate::gait::GaitParams, sim_time: f64 },

    #[error("metric `{metric}` is undefined for velocity {velocity}")]
    UndefinedMetric { metric: &'static str, velocity: f64 },

    #[error("kernel matrix is not positive definite even with jitter {jitter:e}")]
    SingularKernel { jitter: f64 },

    #[error("config parse error: {0}")]
    Config(String),

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("io error: {0}")]
    Io(String),
}

impl Error {
    pub(crate) fn validation(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Validation {
            field: field.into(),
            reason: reason.into(),
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
