//! Batch driver for jflow experiments: configuration, orchestration and output files.

pub mod config;
pub mod output;
pub mod run;

use std::path::PathBuf;

use jflow_core::JflowError;

pub use config::{parse_config, parse_config_for, Command, ConfigErrors, ConfigIssue, RunConfig};
pub use run::run_command;

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 1;
pub const EXIT_FAILURE: i32 = 2;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Config(#[from] ConfigErrors),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error(transparent)]
    Core(#[from] JflowError),
    #[error("{0}")]
    Diagnose(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => EXIT_CONFIG,
            CliError::Core(
                JflowError::NoConvergence { .. } | JflowError::StepFailure { .. } | JflowError::LeftKahlerCone { .. },
            ) => EXIT_FAILURE,
            // anything else the core rejects comes from the inputs (bad potentials, bad backgrounds)
            CliError::Core(_) => EXIT_CONFIG,
            CliError::Io { .. } | CliError::Diagnose(_) => EXIT_FAILURE,
        }
    }
}

/// Size the global worker pool from `JFLOW_THREADS`, if set.
pub fn configure_threads(value: Option<&str>) -> Result<(), ConfigErrors> {
    let Some(raw) = value else { return Ok(()) };
    let bad = |reason: &str| ConfigErrors(vec![ConfigIssue::Validation { key: "JFLOW_THREADS".into(), reason: reason.into() }]);
    let threads: usize = raw.trim().parse().map_err(|_| bad("must be a positive integer"))?;
    if threads == 0 {
        return Err(bad("must be a positive integer"));
    }
    // a pool may already exist when called twice in one process; the first size wins
    let _ = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global();
    Ok(())
}
