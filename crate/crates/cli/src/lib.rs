//! Command-line front end: run experiments from a config file, suggest the
//! next design point for an external simulator, and validate configs.

pub mod commands;
pub mod config;

pub use commands::{
    cmd_run, cmd_suggest, cmd_validate, RunOverrides, Suggestion, STATE_CONFIG, STATE_DATA, SUGGESTION_FILE,
};
pub use config::{ExperimentConfig, LoadedConfig};

/// Prefix of every diagnostic line, followed by the error class.
pub const DIAGNOSTIC_PREFIX: &str = "palc: error";

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error("{0}")]
    Runtime(String),
    #[error("budget reached ({0} samples)")]
    BudgetReached(usize),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Runtime(_) => 3,
            CliError::BudgetReached(_) => 4,
        }
    }

    fn class(&self) -> &'static str {
        match self {
            CliError::Config(_) => "config",
            CliError::Runtime(_) => "runtime",
            CliError::BudgetReached(_) => "budget",
        }
    }

    /// One-line diagnostic, e.g. `palc: error[config]: active.budget: ...`.
    pub fn diagnostic(&self) -> String {
        let msg = self.to_string().replace(['\n', '\r'], " ");
        format!("{DIAGNOSTIC_PREFIX}[{}]: {msg}", self.class())
    }
}

impl From<palc_core::Error> for CliError {
    fn from(e: palc_core::Error) -> Self {
        match e {
            palc_core::Error::InvalidConfig(m) => CliError::Config(m),
            other => CliError::Runtime(other.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Runtime(e.to_string())
    }
}
