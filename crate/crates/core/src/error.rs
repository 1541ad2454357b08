use thiserror::Error;

/// Errors produced by the coverage pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("invalid sample set: {0}")]
    InvalidSamples(String),

    #[error("degenerate samples: all (x, y) locations are collinear")]
    DegenerateSamples,

    #[error("constraint repair failed: {0}")]
    RepairFailure(String),

    #[error("objective evaluation failed: {0}")]
    ObjectiveFailure(String),

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("config: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }
}
