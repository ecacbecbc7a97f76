use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("insufficient depth: need {needed}, table holds {available}")]
    InsufficientDepth { needed: usize, available: usize },

    #[error("normalization failure: total {total} deviates from 1 by more than {tolerance}")]
    Normalization { total: f64, tolerance: f64 },

    #[error("probability {value} outside [0, 1] ({context})")]
    InvalidProbability { value: f64, context: String },

    #[error("monte-carlo degeneracy: {0}")]
    McDegenerate(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("numerical failure: {0}")]
    Numeric(String),

    #[error("precision: {0}")]
    Precision(String),

    #[error("io: {0}")]
    Io(#[from] std::io::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("parse: {0}")]
    Parse(String),
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    /// True for failures that signal broken numerics rather than bad input.
    pub fn is_numeric(&self) -> bool {
        matches!(
            self,
            Error::Normalization { .. }
                | Error::InvalidProbability { .. }
                | Error::McDegenerate(_)
                | Error::Numeric(_)
                | Error::Precision(_)
        )
    }
}
