use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, got {actual}")]
    DimensionMismatch {
        context: &'static str,
        expected: String,
        actual: String,
    },

    /// A positive-definite solve failed even after the full jitter ladder.
    #[error("numerical failure in {context}{}: condition estimate {condition:.3e}",
        state.as_ref().map(|s| format!(" (state {s})")).unwrap_or_default())]
    NumericalFailure {
        context: &'static str,
        state: Option<String>,
        condition: f64,
    },

    #[error("capacity exceeded: H = {h} exceeds the enumeration limit of {max}")]
    Capacity { h: usize, max: usize },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("EM iteration {iteration}: {source}")]
    Iteration {
        iteration: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("data point {index}: {source}")]
    DataPoint {
        index: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error: {0}")]
    Parse(String),
}

impl Error {
    pub fn dims(context: &'static str, expected: impl ToString, actual: impl ToString) -> Self {
        Error::DimensionMismatch {
            context,
            expected: expected.to_string(),
            actual: actual.to_string(),
        }
    }

    pub fn at_iteration(self, iteration: usize) -> Self {
        Error::Iteration {
            iteration,
            source: Box::new(self),
        }
    }

    pub fn at_point(self, index: usize) -> Self {
        Error::DataPoint {
            index,
            source: Box::new(self),
        }
    }

    /// Strips iteration/data-point wrappers.
    pub fn root(&self) -> &Error {
        match self {
            Error::Iteration { source, .. } | Error::DataPoint { source, .. } => source.root(),
            other => other,
        }
    }

    pub fn is_numerical(&self) -> bool {
        matches!(self.root(), Error::NumericalFailure { .. })
    }
}
