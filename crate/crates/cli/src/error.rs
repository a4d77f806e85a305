use std::path::PathBuf;

/// Process exit codes.
pub mod exit {
    pub const FEASIBLE: i32 = 0;
    pub const USAGE: i32 = 1;
    pub const INFEASIBLE: i32 = 2;
    pub const NOT_CONVERGED: i32 = 3;
    /// Numerical aborts and failed self-checks.
    pub const NUMERICAL: i32 = 4;
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Model(#[from] opacity_core::Error),
}

impl CliError {
    pub fn io(context: impl Into<String>, source: std::io::Error) -> Self {
        CliError::Io { context: context.into(), source }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Model(
                opacity_core::Error::NonFinite { .. }
                | opacity_core::Error::BoundViolation { .. }
                | opacity_core::Error::Singular,
            ) => exit::NUMERICAL,
            _ => exit::USAGE,
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;
