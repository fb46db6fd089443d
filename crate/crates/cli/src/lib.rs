//! Configuration-driven experiment runner for the analog training simulator.
//!
//! An experiment is a TOML document ([`config::ExperimentConfig`]). The runner
//! expands it into `(variant, seed)` cells, executes them in parallel and
//! writes per-cell traces, a cross-seed summary and metadata. The
//! [`verify`] module reruns the built-in presets and checks the expected
//! behaviour of each.

pub mod config;
pub mod error;
pub mod output;
pub mod presets;
pub mod runner;
pub mod verify;

use std::path::Path;

pub use config::{load_config, ExperimentConfig, ExperimentKind};
pub use error::{CliError, Result};
pub use output::{summarize, write_artifacts, SummaryRow};
pub use runner::{execute, ExperimentOutput};

/// Runs `config` and writes its artifacts into `dir`.
pub fn run_experiment(config: &ExperimentConfig, dir: &Path) -> Result<Vec<SummaryRow>> {
    let output = execute(config)?;
    write_artifacts(config, &output, dir)
}
