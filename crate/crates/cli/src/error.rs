use std::fmt;

/// CLI failure, split by exit code.
#[derive(Debug)]
pub enum CliError {
    /// Bad input: unreadable or malformed config, invalid arguments. Exit 2.
    Validation(String),
    /// Analytic or I/O failure while running a valid scenario. Exit 3.
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) => 2,
            CliError::Runtime(_) => 3,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Validation(m) => write!(f, "invalid input: {m}"),
            CliError::Runtime(m) => write!(f, "error: {m}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Runtime(e.to_string())
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;

pub fn invalid(e: impl fmt::Display) -> CliError {
    CliError::Validation(e.to_string())
}

pub fn runtime(e: impl fmt::Display) -> CliError {
    CliError::Runtime(e.to_string())
}
