//! Configuration parsing, file formats and the `simulate`, `reconstruct`
//! and `bench` commands behind the `helmscat` binary.

pub mod commands;
pub mod config;
pub mod error;
pub mod formats;

use std::path::Path;

pub use commands::{bench, bench_rows, reconstruct, reconstruct_run, simulate, Outputs, SceneKind};
pub use config::RunConfig;
pub use error::CliError;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Command {
    Simulate,
    Reconstruct,
    Bench,
}

/// Parses the configuration file, applies overrides, runs the command and
/// writes its outputs into `out_dir`.
pub fn run(command: Command, config_path: &Path, out_dir: &Path, seed: Option<u64>) -> Result<Outputs, CliError> {
    let text = std::fs::read_to_string(config_path)
        .map_err(|e| CliError::io(format!("reading {}", config_path.display()), e))?;
    let mut cfg: RunConfig = text.parse()?;
    if let Some(seed) = seed {
        cfg.set("seed", seed)?;
    }
    let outputs = match command {
        Command::Simulate => simulate(&cfg)?,
        Command::Reconstruct => reconstruct(&cfg)?,
        Command::Bench => bench(&cfg)?,
    };
    outputs.write_to(out_dir)?;
    Ok(outputs)
}
