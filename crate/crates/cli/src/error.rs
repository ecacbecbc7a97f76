use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),

    #[error("numerical failure: {0}")]
    Numeric(String),

    #[error("{0}")]
    Other(String),
}

impl CliError {
    /// 0 success, 1 other, 2 usage, 3 numeric.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Numeric(_) => 3,
            CliError::Other(_) => 1,
        }
    }

    pub fn usage(msg: impl Into<String>) -> Self {
        CliError::Usage(msg.into())
    }

    pub fn other(msg: impl Into<String>) -> Self {
        CliError::Other(msg.into())
    }
}

impl From<gibbs_ibp::Error> for CliError {
    fn from(e: gibbs_ibp::Error) -> Self {
        match e {
            gibbs_ibp::Error::Domain(_) | gibbs_ibp::Error::Parse(_) => CliError::Usage(e.to_string()),
            e if e.is_numeric() => CliError::Numeric(e.to_string()),
            e => CliError::Other(e.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Other(format!("io: {e}"))
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Other(format!("csv: {e}"))
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Other(format!("json: {e}"))
    }
}

pub type CliResult<T> = Result<T, CliError>;
