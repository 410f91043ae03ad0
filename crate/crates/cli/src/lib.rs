//! Command-line experiment runner for the `bimax-core` solvers.
//!
//! Configs are single JSON documents; outputs are versioned CSV tables or a
//! JSON run record, each embedding the fully resolved config.

pub mod commands;
pub mod config;
pub mod csvout;

pub use commands::{execute, Artifact};
pub use config::{parse_config, ExperimentConfig, Mode};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("output error: {0}")]
    Output(String),
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Output(e.to_string())
    }
}

impl CliError {
    /// 2 for config errors, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            _ => 1,
        }
    }
}

/// Exit code after a successful command: 3 when a `run` diverged.
pub fn exit_code(a: &Artifact) -> i32 {
    if a.diverged {
        3
    } else {
        0
    }
}
