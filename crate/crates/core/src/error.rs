use std::fmt;

/// Diagnostics for a single optimizer start.
#[derive(Debug, Clone, PartialEq)]
pub struct StartReport {
    pub start: usize,
    pub iterations: usize,
    pub best_value: f64,
    pub converged: bool,
    pub message: String,
}

impl fmt::Display for StartReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "start {}: {} iterations, best {:e}, converged={} ({})",
            self.start, self.iterations, self.best_value, self.converged, self.message
        )
    }
}

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("numerical failure: {0}")]
    NumericalFailure(String),

    #[error("optimization failed on all {} starts", .starts.len())]
    OptimizationFailure { starts: Vec<StartReport> },

    #[error("at node {index}: {source}")]
    AtNode {
        index: usize,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub fn shape(msg: impl Into<String>) -> Self {
        Error::Shape(msg.into())
    }

    pub fn numerical(msg: impl Into<String>) -> Self {
        Error::NumericalFailure(msg.into())
    }

    /// Innermost error, with node wrappers stripped.
    pub fn root(&self) -> &Error {
        match self {
            Error::AtNode { source, .. } => source.root(),
            other => other,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
