use std::fmt;

/// Failure of a command, mapped onto the process exit code.
#[derive(Debug)]
pub enum CliError {
    /// Bad arguments or input that does not match the command (exit 2).
    Usage(String),
    /// Reading or writing a file failed (exit 3).
    Io(String),
    /// The method itself failed on the data (exit 4, or 5 for an all-zero Gram matrix).
    Method(cdnod::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Io(_) => 3,
            CliError::Method(cdnod::Error::AllZeroGram) => 5,
            CliError::Method(_) => 4,
        }
    }

    pub fn io(path: &std::path::Path, err: impl fmt::Display) -> Self {
        CliError::Io(format!("{}: {err}", path.display()))
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "{m}"),
            CliError::Io(m) => write!(f, "I/O error: {m}"),
            CliError::Method(e) => write!(f, "{e}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<cdnod::Error> for CliError {
    fn from(e: cdnod::Error) -> Self {
        use cdnod::Error::*;
        match e {
            UnknownVariable(_) | LabelMismatch(_) | InvalidConfig(_) => CliError::Usage(e.to_string()),
            other => CliError::Method(other),
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;
