use janus_core::make::HandshakeError;
use janus_core::policy::PolicyError;
use janus_core::ValidationError;
use janus_scale::ScaleError;

pub const EXIT_OK: i32 = 0;
pub const EXIT_VALIDATION: i32 = 2;
pub const EXIT_ASSERTION: i32 = 3;
pub const EXIT_TRANSPORT: i32 = 4;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Validation(String),
    #[error("scenario assertion failed: {0}")]
    Assertion(String),
    #[error("transport: {0}")]
    Transport(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) => EXIT_VALIDATION,
            CliError::Assertion(_) => EXIT_ASSERTION,
            CliError::Transport(_) => EXIT_TRANSPORT,
        }
    }

    pub fn validation(msg: impl std::fmt::Display) -> Self {
        CliError::Validation(msg.to_string())
    }
}

impl From<ValidationError> for CliError {
    fn from(e: ValidationError) -> Self {
        CliError::Validation(e.to_string())
    }
}

impl From<PolicyError> for CliError {
    fn from(e: PolicyError) -> Self {
        CliError::Validation(e.to_string())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Validation(e.to_string())
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Transport(e.to_string())
    }
}

impl From<HandshakeError> for CliError {
    fn from(e: HandshakeError) -> Self {
        CliError::Transport(e.to_string())
    }
}

impl From<ScaleError> for CliError {
    fn from(e: ScaleError) -> Self {
        match e {
            ScaleError::Io(e) => CliError::Transport(e.to_string()),
            other => CliError::Validation(other.to_string()),
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;
