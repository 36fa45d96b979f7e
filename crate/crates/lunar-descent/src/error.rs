use thiserror::Error;

/// Errors surfaced by the command-line tool, each mapped to an exit code.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("usage: {0}")]
    Usage(String),
    #[error("configuration: {0}")]
    Config(String),
    #[error("missing input artifacts: {}", .0.join(", "))]
    MissingArtifacts(Vec<String>),
    #[error("i/o: {0}")]
    Io(String),
    #[error("{0}")]
    Runtime(String),
    #[error("shooting did not converge: {0}")]
    NotConverged(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) | CliError::Config(_) | CliError::MissingArtifacts(_) => 2,
            CliError::Io(_) | CliError::Runtime(_) => 1,
            CliError::NotConverged(_) => 3,
        }
    }
}

impl From<lunar_descent_core::Error> for CliError {
    fn from(e: lunar_descent_core::Error) -> Self {
        match e {
            lunar_descent_core::Error::Config(m) => CliError::Config(m),
            lunar_descent_core::Error::InvalidParameter { .. } => CliError::Config(e.to_string()),
            other => CliError::Runtime(other.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Io(e.to_string())
    }
}
