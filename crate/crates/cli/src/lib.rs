//! Command-line driver, HTTP steering service and external classifier
//! client for the `emosteer` toolkit.

pub mod artifact;
pub mod classifier;
pub mod commands;
pub mod service;

/// Exit code 2 for inputs that do not resolve, 1 for failures after that.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Runtime(#[from] anyhow::Error),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Runtime(_) => 1,
        }
    }
}

impl From<emosteer::Error> for CliError {
    fn from(e: emosteer::Error) -> Self {
        CliError::Runtime(e.into())
    }
}
