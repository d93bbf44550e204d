//! Experiment runner for `stefan-core`: JSON configs in, JSON/CSV artifacts out.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod scenarios;
pub mod sweep;

pub use config::{ExperimentConfig, Scenario};

/// Environment variable that overrides the configured output directory.
pub const OUT_DIR_ENV: &str = "STEFAN_LAB_OUT_DIR";

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("usage: {0}")]
    Usage(String),
    #[error("invalid config at `{field}`: {message}")]
    Config { field: String, message: String },
    #[error(transparent)]
    Core(#[from] stefan_core::Error),
    #[error("scenario failed: {0}")]
    Scenario(String),
    #[error("csv output: {0}")]
    Csv(#[from] csv::Error),
}

impl CliError {
    /// 2 for usage and configuration problems, 1 for failed runs.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) | CliError::Config { .. } => 2,
            _ => 1,
        }
    }
}
