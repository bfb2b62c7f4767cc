use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error(transparent)]
    Core(#[from] strata_core::Error),
    #[error("acceptance failure: {0}")]
    Acceptance(String),
    #[error("self test failed: {0}")]
    SelfTest(String),
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Core(strata_core::Error::Io(e))
    }
}

/// Machine-readable error entry of the run manifest.
#[derive(Debug, Clone, Serialize)]
pub struct ErrorRecord {
    pub class: &'static str,
    pub kind: String,
    pub message: String,
    pub exit_code: i32,
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Core(e) if e.is_validation() => 3,
            CliError::Core(_) => 4,
            CliError::Acceptance(_) => 5,
            CliError::SelfTest(_) => 4,
        }
    }

    pub fn record(&self) -> ErrorRecord {
        let (class, kind) = match self {
            CliError::Config(_) => ("ConfigParse", "ConfigParse".to_string()),
            CliError::Core(e) if e.is_validation() => ("Validation", e.kind().to_string()),
            CliError::Core(e) => ("SolverFailure", e.kind().to_string()),
            CliError::Acceptance(_) => ("AcceptanceFailure", "AcceptanceFailure".to_string()),
            CliError::SelfTest(_) => ("SolverFailure", "SelfTestFailure".to_string()),
        };
        ErrorRecord {
            class,
            kind,
            message: self.to_string(),
            exit_code: self.exit_code(),
        }
    }
}
