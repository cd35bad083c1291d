//! Command-line driver: configuration, presets, runs and CSV output.

mod commands;
pub mod config;
mod output;
pub mod presets;

use std::path::PathBuf;

pub use commands::{execute, run_converge, run_dynamics, run_oracle, run_spectrum, run_sweep, Command};
pub use config::{BinCount, InitialSelector, RawConfig, RunConfig};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("cannot write {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

impl CliError {
    /// 1 for configuration and I/O problems, 2 for numerical failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Io { .. } => 1,
            CliError::Numerical(_) => 2,
        }
    }
}

impl From<crate::Error> for CliError {
    fn from(e: crate::Error) -> Self {
        use crate::Error::*;
        match e {
            NonFinite { .. } | ToleranceNotMet { .. } | StepBudget { .. } | ZeroPopulation { .. } | NoSplitting(_) => {
                CliError::Numerical(e.to_string())
            }
            _ => CliError::Config(e.to_string()),
        }
    }
}
