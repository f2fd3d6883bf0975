//! Command implementations behind the `tdcis` binary.
//!
//! Exit codes: 0 success, 1 configuration/parse/I-O problem, 2 failed
//! verification or numeric failure, 3 chart ineligibility (non-compact
//! level sets, separatrix levels, non-separable systems).

pub mod commands;
pub mod config;

use std::path::{Path, PathBuf};

use thiserror::Error;

pub use commands::{run_command, Command, Outcome};
pub use config::RunConfig;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CliError {
    #[error("config: {0}")]
    Config(String),
    #[error("expression: {0}")]
    Parse(String),
    #[error("i/o: {0}")]
    Io(String),
    #[error("numeric failure: {0}")]
    Numeric(String),
    #[error("chart not available: {0}")]
    Ineligible(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Parse(_) | CliError::Io(_) => 1,
            CliError::Numeric(_) => 2,
            CliError::Ineligible(_) => 3,
        }
    }
}

/// Loads the config, runs the command, writes its files under `out` (flag)
/// or `[output] dir` or `out/`, and prints summary lines. Returns the exit
/// code.
pub fn execute(cmd: Command, config: &Path, seed: Option<u64>, out: Option<PathBuf>) -> i32 {
    match execute_inner(cmd, config, seed, out) {
        Ok(outcome) => {
            for line in &outcome.stdout {
                println!("{line}");
            }
            outcome.exit
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn execute_inner(cmd: Command, config: &Path, seed: Option<u64>, out: Option<PathBuf>) -> Result<Outcome, CliError> {
    let text = std::fs::read_to_string(config)
        .map_err(|e| CliError::Io(format!("cannot read {}: {e}", config.display())))?;
    let cfg = RunConfig::parse(&text)?;
    let dir = out
        .or_else(|| cfg.output.dir.clone())
        .unwrap_or_else(|| PathBuf::from("out"));
    let outcome = run_command(cmd, &cfg, seed)?;
    std::fs::create_dir_all(&dir).map_err(|e| CliError::Io(format!("cannot create {}: {e}", dir.display())))?;
    for (name, content) in &outcome.files {
        let path = dir.join(name);
        std::fs::write(&path, content).map_err(|e| CliError::Io(format!("cannot write {}: {e}", path.display())))?;
    }
    Ok(outcome)
}
