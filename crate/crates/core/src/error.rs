use thiserror::Error;

/// Errors raised by the library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("parse error at line {line}, column {column}: {msg}")]
    Parse {
        line: usize,
        column: usize,
        msg: String,
    },
    #[error("invalid network: {0}")]
    InvalidNetwork(String),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("selection infeasible: {0}")]
    Infeasible(String),
    #[error("target edge {i} -> {j} is absent")]
    MissingTarget { i: usize, j: usize },
    #[error("singular feedthrough: {0}")]
    SingularFeedthrough(String),
    #[error("numerical failure in {stage}: {msg}")]
    Numerical { stage: String, msg: String },
    #[error("internal error: {0}")]
    Internal(String),
}

impl Error {
    pub(crate) fn numerical(stage: &str, msg: impl Into<String>) -> Self {
        Error::Numerical {
            stage: stage.to_string(),
            msg: msg.into(),
        }
    }

    /// True for failures of numerical routines (as opposed to bad input).
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::Numerical { .. } | Error::SingularFeedthrough(_) | Error::Internal(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
