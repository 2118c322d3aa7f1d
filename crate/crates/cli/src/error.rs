use std::fmt;
use std::path::Path;

/// Failure of a subcommand, split by who is at fault. Usage errors exit with
/// status 2, everything else with 1.
#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Internal(String),
}

pub type CliResult<T> = Result<T, CliError>;

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Internal(_) => 1,
        }
    }

    pub fn missing(what: &str, path: &Path) -> CliError {
        CliError::Usage(format!("{what} not found: {}", path.display()))
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) | CliError::Internal(m) => f.write_str(m),
        }
    }
}

impl std::error::Error for CliError {}

impl From<privseg_core::Error> for CliError {
    fn from(e: privseg_core::Error) -> Self {
        use privseg_core::Error as E;
        match &e {
            E::InvalidConfig(_) | E::InvalidInput(_) | E::Format(_) => CliError::Usage(e.to_string()),
            E::Io(io) if io.kind() == std::io::ErrorKind::NotFound => CliError::Usage(e.to_string()),
            _ => CliError::Internal(e.to_string()),
        }
    }
}

impl From<privseg_tensor::TensorError> for CliError {
    fn from(e: privseg_tensor::TensorError) -> Self {
        privseg_core::Error::from(e).into()
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Internal(e.to_string())
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Internal(e.to_string())
    }
}

/// Fails with a usage error naming `path` when it does not exist.
pub fn require(what: &str, path: &Path) -> CliResult<()> {
    if path.exists() {
        Ok(())
    } else {
        Err(CliError::missing(what, path))
    }
}
