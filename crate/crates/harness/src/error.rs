//! Harness errors and their process exit codes.

use crate::config::ConfigError;

#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("incompatible configuration: {0}")]
    Incompatible(String),
    #[error(transparent)]
    Runtime(#[from] tensorized::Error),
}

impl HarnessError {
    /// 1 for configuration problems, 2 for failures while running.
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Config(_) | HarnessError::Incompatible(_) => 1,
            HarnessError::Runtime(_) => 2,
        }
    }
}

pub type Result<T, E = HarnessError> = std::result::Result<T, E>;
