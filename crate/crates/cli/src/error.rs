use serde::Serialize;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Core(#[from] ctl_core::Error),

    #[error("{0}")]
    Runtime(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type CliResult<T> = std::result::Result<T, CliError>;

#[derive(Debug, Serialize)]
pub struct ErrorDocument {
    pub error: &'static str,
    pub message: String,
    pub exit_code: i32,
}

impl CliError {
    /// 2 for configuration problems, 1 for everything that went wrong while running.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            _ => 1,
        }
    }

    pub fn document(&self) -> ErrorDocument {
        let error = match self {
            CliError::Config(_) => "config",
            CliError::Core(_) => "solver",
            CliError::Runtime(_) => "runtime",
            CliError::Io(_) => "io",
            CliError::Csv(_) | CliError::Json(_) => "output",
        };
        ErrorDocument { error, message: self.to_string(), exit_code: self.exit_code() }
    }
}
