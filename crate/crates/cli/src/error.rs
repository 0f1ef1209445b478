//! CLI error wrapper mapping failures to the documented exit codes:
//! 2 config, 3 data, 4 numeric.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),

    #[error("stage {stage}: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: progspace::Error,
    },

    #[error(transparent)]
    Core(#[from] progspace::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Stage { source, .. } | CliError::Core(source) => match source {
                progspace::Error::InvalidSpec(_) => 2,
                e if e.is_data_error() => 3,
                _ => 4,
            },
        }
    }
}

pub type Result<T> = std::result::Result<T, CliError>;
