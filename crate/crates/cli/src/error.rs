use thiserror::Error;

/// CLI failure, split by exit code.
#[derive(Debug, Error)]
pub enum CliError {
    /// Exit code 1.
    #[error("configuration error: {0}")]
    Config(String),
    /// Exit code 2.
    #[error("run failed: {0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            Self::Config(_) => 1,
            Self::Runtime(_) => 2,
        }
    }
}

impl From<bregflow::Error> for CliError {
    fn from(e: bregflow::Error) -> Self {
        match e {
            bregflow::Error::Config(msg) => Self::Config(msg),
            other => Self::Runtime(other.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        Self::Runtime(e.to_string())
    }
}
