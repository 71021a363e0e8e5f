use std::path::PathBuf;

use clap::{Parser, Subcommand};
use ricci_disk::cli;

/// Ricci flow on the disk with the Neumann curvature condition.
#[derive(Parser)]
#[command(version, about)]
struct Args {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Flow the configured metric and write the trajectory CSV.
    Run { config: PathBuf },
    /// Run the configured identity checks and write JSON-lines reports.
    Verify { config: PathBuf },
    /// Run a convergence study and write its CSV.
    Convergence { config: PathBuf },
}

fn main() {
    let args = match Args::try_parse() {
        Ok(a) => a,
        Err(e) => {
            let code = if e.use_stderr() { cli::EXIT_USAGE } else { cli::EXIT_OK };
            let _ = e.print();
            std::process::exit(code);
        }
    };
    let code = match args.command {
        Command::Run { config } => cli::cmd_run(&config),
        Command::Verify { config } => cli::cmd_verify(&config),
        Command::Convergence { config } => cli::cmd_convergence(&config),
    };
    std::process::exit(code);
}
