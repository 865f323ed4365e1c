//! Config-driven batch runs over the `hgraph` library.

pub mod config;
pub mod run;

use thiserror::Error;

pub use config::{RunConfig, Task};
pub use run::{run, run_extend, ExtendInputs, Manifest};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("invalid configuration: {0}")]
    Validation(String),
    #[error("task failed: {0}")]
    Task(String),
    #[error("i/o error: {0}")]
    Io(String),
}

impl CliError {
    /// Process exit status for this error.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) => 2,
            CliError::Task(_) | CliError::Io(_) => 3,
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
