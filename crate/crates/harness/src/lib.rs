//! Experiment harness for the `dsgld` sampler library.
//!
//! Configurations are TOML files ([`config::ExperimentConfig`]). [`experiment`]
//! runs seeded trials in parallel and writes metric CSVs plus a provenance
//! record; [`tune`] grid-searches stepsizes; [`figures`] holds the pinned
//! reproduction configurations and [`report`] evaluates the theory constants
//! for a configuration.

pub mod config;
pub mod experiment;
pub mod figures;
pub mod plot;
pub mod report;
pub mod tune;

use std::path::PathBuf;

/// Environment variable naming the directory below which runs are written.
pub const OUTPUT_ROOT_ENV: &str = "DSGLD_OUTPUT_ROOT";

/// Output root from [`OUTPUT_ROOT_ENV`], else the working directory.
pub fn output_root() -> PathBuf {
    std::env::var_os(OUTPUT_ROOT_ENV).map(PathBuf::from).unwrap_or_else(|| PathBuf::from("."))
}

#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("{sampler} trial {trial}: {source}")]
    Trial {
        sampler: String,
        trial: u64,
        #[source]
        source: dsgld::Error,
    },
    #[error(transparent)]
    Core(#[from] dsgld::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("every grid point failed or diverged for {0}")]
    AllGridPointsFailed(String),
    #[error("unknown figure `{0}` (expected one of fig2a, fig2b, fig2c, fig3a, fig3b, fig3c)")]
    UnknownFigure(String),
}
