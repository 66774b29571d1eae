//! Experiment runner: TOML configuration, seeded runs of the chain, Monte
//! Carlo, sphere and prototype suites, and report files.

pub mod config;
pub mod report;
mod run;

pub use config::{ExperimentConfig, Kind};
pub use report::{emit_reports, ReportBundle, Status};
pub use run::run_experiment;
pub use trace_forms::mc::{derive_streams, RngStream};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("cannot write {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("run failed: {0}")]
    Run(String),
}

impl CliError {
    /// Config and I/O errors exit with 3, failed runs with 1.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Io { .. } => 3,
            CliError::Run(_) => 1,
        }
    }
}
