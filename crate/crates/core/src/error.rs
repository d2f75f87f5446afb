use std::path::PathBuf;

use thiserror::Error;

/// Errors raised by mesh handling, assembly, the solvers and the harness.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("validation error: {0}")]
    Validation(String),

    #[error("evaluation error: {0}")]
    Evaluation(String),

    #[error("numeric breakdown in {solver}: {message}")]
    NumericBreakdown {
        solver: &'static str,
        message: String,
    },

    #[error("step failure ({context}): {message}")]
    StepFailure { context: String, message: String },

    #[error("nonlinear divergence after {iterations} iterations: {message}")]
    NonlinearDivergence { iterations: usize, message: String },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Prefix a step failure with the scheme/stage that produced it.
    pub(crate) fn in_context(self, context: &str) -> Self {
        match self {
            Error::StepFailure {
                context: inner,
                message,
            } => Error::StepFailure {
                context: format!("{context}/{inner}"),
                message,
            },
            Error::NumericBreakdown { solver, message } => Error::StepFailure {
                context: context.to_string(),
                message: format!("{solver}: {message}"),
            },
            other => other,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
