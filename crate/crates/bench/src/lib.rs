//! Experiment runner, verification suites and exporters for `ccpo-core`.

pub mod bounds;
pub mod checks;
pub mod config;
pub mod run;

use std::fmt;

/// Errors surfaced by the command line. `Config` maps to exit code 2.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum CliError {
    Config(String),
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Runtime(_) => 1,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "config error: {m}"),
            CliError::Runtime(m) => write!(f, "error: {m}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<ccpo_core::Error> for CliError {
    fn from(e: ccpo_core::Error) -> Self {
        match e {
            ccpo_core::Error::Config(m) => CliError::Config(m),
            other => CliError::Runtime(other.to_string()),
        }
    }
}
