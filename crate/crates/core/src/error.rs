use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error in {context}: {message}")]
    Parse { context: String, message: String },

    #[error("invalid robot model: {0}")]
    Model(String),

    #[error("joint {index} ({name}): lower limit {lower} is not below upper limit {upper}")]
    InvalidLimits {
        index: usize,
        name: String,
        lower: f64,
        upper: f64,
    },

    #[error("neutral pose is infeasible: {0}")]
    InfeasibleNeutral(String),

    #[error("landmark {landmark} refers to unknown link {link:?}")]
    DanglingLandmark { landmark: String, link: String },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("degenerate bone {bone}: endpoints coincide")]
    DegenerateBone { bone: &'static str },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("{context}, line {line}: {message}")]
    Record {
        context: String,
        line: usize,
        message: String,
    },

    #[error("training diverged at step {step}: non-finite {what}")]
    Divergence { step: usize, what: String },

    #[error("empty input: {0}")]
    Empty(String),

    #[error("checkpoint mismatch: {0}")]
    Checkpoint(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(context: impl Into<String>, message: impl ToString) -> Self {
        Error::Parse {
            context: context.into(),
            message: message.to_string(),
        }
    }

    /// Short machine-readable tag for the variant.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Io { .. } => "io",
            Error::Parse { .. } => "parse",
            Error::Model(_) => "model",
            Error::InvalidLimits { .. } => "invalid_limits",
            Error::InfeasibleNeutral(_) => "infeasible_neutral",
            Error::DanglingLandmark { .. } => "dangling_landmark",
            Error::DimensionMismatch { .. } => "dimension_mismatch",
            Error::DegenerateBone { .. } => "degenerate_bone",
            Error::InvalidArgument(_) => "invalid_argument",
            Error::Record { .. } => "record",
            Error::Divergence { .. } => "divergence",
            Error::Empty(_) => "empty",
            Error::Checkpoint(_) => "checkpoint",
        }
    }
}
