use std::fmt;

/// Failure of a command, mapped onto the process exit code.
#[derive(Debug)]
pub enum CliError {
    /// Invalid or unreadable configuration: exit 1.
    Config(String),
    /// Training produced non-finite values: exit 3.
    Diverged(String),
    /// Anything else that went wrong while running: exit 2.
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 1,
            CliError::Runtime(_) => 2,
            CliError::Diverged(_) => 3,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "configuration error: {m}"),
            CliError::Diverged(m) => write!(f, "training diverged: {m}"),
            CliError::Runtime(m) => write!(f, "error: {m}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<sensorclf::Error> for CliError {
    fn from(e: sensorclf::Error) -> Self {
        match e {
            sensorclf::Error::Config(m) => CliError::Config(m),
            sensorclf::Error::Diverged(m) => CliError::Diverged(m),
            other => CliError::Runtime(other.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Runtime(e.to_string())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Runtime(e.to_string())
    }
}
