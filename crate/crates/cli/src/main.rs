use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use tdcis_cli::{execute, Command};

/// Simulate, verify and chart time-dependent integrable Hamiltonian systems.
#[derive(Parser)]
#[command(name = "tdcis", version)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Integrate Hamilton's equations and write trajectory.csv.
    Simulate(Common),
    /// Run the integrability checks and write verify_report.txt.
    Verify(Common),
    /// Build the initial-data action-angle chart and check it.
    Chart(Common),
    /// Apply an action-dependent angle shift and check the dynamics.
    Transform(Common),
}

#[derive(Args)]
struct Common {
    /// TOML run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Overrides the sampling seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory (default: `[output] dir`, else `out`).
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let (cmd, args) = match cli.command {
        Cmd::Simulate(a) => (Command::Simulate, a),
        Cmd::Verify(a) => (Command::Verify, a),
        Cmd::Chart(a) => (Command::Chart, a),
        Cmd::Transform(a) => (Command::Transform, a),
    };
    let code = execute(cmd, &args.config, args.seed, args.out);
    ExitCode::from(code as u8)
}
