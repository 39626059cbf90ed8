use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{}: {source}", path.display())]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },

    #[error(transparent)]
    Core(#[from] gpomdp_core::Error),
}

impl CliError {
    /// Process exit code: every error surfaced here is a configuration or
    /// input problem.
    pub fn exit_code(&self) -> i32 {
        1
    }
}

pub type Result<T, E = CliError> = std::result::Result<T, E>;
