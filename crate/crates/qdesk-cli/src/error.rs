use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    /// Unreadable or schema-violating configuration, unknown preset, missing flag.
    #[error("config error: {0}")]
    Config(String),
    /// A numerical guard of the toolkit tripped (truncation tail, convergence, drift).
    #[error("numerical guard: {0}")]
    Numeric(String),
    #[error("i/o error: {0}")]
    Io(String),
    /// The run finished but a preset target was missed.
    #[error("{0}")]
    TargetMissed(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Numeric(_) => 3,
            CliError::Io(_) | CliError::TargetMissed(_) => 1,
        }
    }
}

impl From<qdesk::Error> for CliError {
    fn from(e: qdesk::Error) -> Self {
        if e.is_numerical() {
            CliError::Numeric(e.to_string())
        } else {
            CliError::Config(e.to_string())
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

pub fn config_err(msg: impl Into<String>) -> CliError {
    CliError::Config(msg.into())
}

pub type CliResult<T> = Result<T, CliError>;
