use std::fmt;

/// Front-end failure, classified by exit code.
#[derive(Debug)]
pub enum CliError {
    /// Bad flags, bad config, missing files. Exit 1.
    Usage(String),
    /// Malformed or unusable input data. Exit 2.
    Data(String),
    /// A library invariant failed. Exit 3.
    Internal(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
            CliError::Internal(_) => 3,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) | CliError::Data(m) | CliError::Internal(m) => f.write_str(m),
        }
    }
}

impl std::error::Error for CliError {}

impl From<dabag::Error> for CliError {
    fn from(e: dabag::Error) -> Self {
        use dabag::Error as E;
        match e {
            E::Usage(_) | E::Config(_) => CliError::Usage(e.to_string()),
            E::Data(_) | E::DimensionMismatch { .. } | E::Numeric(_) => CliError::Data(e.to_string()),
            E::Invariant(_) => CliError::Internal(e.to_string()),
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;
