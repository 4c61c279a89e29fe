//! Scenario runner for the `fdi-core` pipeline: load synthesis, PMU stream
//! simulation, attack design, state estimation and detection, driven by a
//! TOML config.
//!
//! Every stage draws its randomness from [`stage_seed`]`(master, name)`, so
//! a config and a seed fix every output byte for byte.

pub mod config;
pub mod pipeline;
pub mod plot;

pub use config::{FilterChoice, ScenarioConfig};
pub use pipeline::{run_scenario, run_verb, stage_seed, RunManifest, Verb};
pub use plot::emit_plot_data;

use std::path::Path;

#[derive(Debug, thiserror::Error)]
pub enum BenchError {
    #[error("config: {0}")]
    Config(String),
    #[error("{stage} failed: {cause}")]
    Solver { stage: &'static str, cause: String },
    #[error("detection failed: {0}")]
    Detection(String),
    #[error("io: {0}")]
    Io(String),
}

impl BenchError {
    pub fn solver(stage: &'static str, cause: impl std::fmt::Display) -> Self {
        BenchError::Solver { stage, cause: cause.to_string() }
    }

    pub fn io(path: &Path, e: impl std::fmt::Display) -> Self {
        BenchError::Io(format!("{}: {e}", path.display()))
    }

    /// Process exit status for the CLI.
    pub fn exit_code(&self) -> i32 {
        match self {
            BenchError::Config(_) => 2,
            BenchError::Solver { .. } => 3,
            BenchError::Detection(_) => 4,
            BenchError::Io(_) => 1,
        }
    }
}
