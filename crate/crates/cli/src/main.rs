//! `cemit`: run, sweep and validate collective-emission scenario files.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use collective_emission::runner::{cli_run, cli_sweep, cli_validate, Report, EXIT_CONFIG};

#[derive(Parser)]
#[command(name = "cemit", version, about = "Quantum state of light emitted by correlated emitters")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario (every point of its sweep block, if any).
    Run {
        config: PathBuf,
        #[arg(short, long)]
        out: PathBuf,
        /// Exit 4 when emission stalls on a subradiant remainder.
        #[arg(long)]
        strict: bool,
        /// Worker threads for sweep points (default: all cores).
        #[arg(long)]
        threads: Option<usize>,
    },
    /// Sweep one or more parameters over a base scenario.
    Sweep {
        config: PathBuf,
        /// `name=v1,v2,...`; repeat for a grid. First axis varies slowest.
        #[arg(long = "axis", value_name = "NAME=VALUES")]
        axes: Vec<String>,
        #[arg(short, long)]
        out: PathBuf,
        #[arg(long)]
        threads: Option<usize>,
    },
    /// Check a scenario file without running it.
    Validate { config: PathBuf },
}

fn threads(n: Option<usize>) -> Result<(), String> {
    match n {
        None => Ok(()),
        Some(0) => Err("--threads must be at least 1".into()),
        Some(n) => rayon::ThreadPoolBuilder::new().num_threads(n).build_global().map_err(|e| e.to_string()),
    }
}

fn finish(report: Report) -> ExitCode {
    for m in &report.messages {
        if report.code == 0 && !m.starts_with("warning") {
            println!("{m}");
        } else {
            eprintln!("{m}");
        }
    }
    ExitCode::from(report.code as u8)
}

fn main() -> ExitCode {
    let report = match Cli::parse().command {
        Command::Run { config, out, strict, threads: n } => match threads(n) {
            Ok(()) => cli_run(&config, &out, strict),
            Err(e) => usage(e),
        },
        Command::Sweep { config, axes, out, threads: n } => match threads(n) {
            Ok(()) => cli_sweep(&config, &axes, &out),
            Err(e) => usage(e),
        },
        Command::Validate { config } => cli_validate(&config),
    };
    finish(report)
}

fn usage(message: String) -> Report {
    Report { code: EXIT_CONFIG, messages: vec![format!("error: {message}")], points: vec![] }
}
