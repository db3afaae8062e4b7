//! `spinpulse`: runs simulations, fidelity landscapes, optimal-control suites,
//! antenna field maps and data fits from TOML configs.
//!
//! Exit codes: 0 success, 1 validation error, 2 input parse error,
//! 3 numerical failure.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use spinpulse::io::parse_toml;
use spinpulse::{Error, Result};

use commands::Run;

#[derive(Debug, Parser)]
#[command(name = "spinpulse", version, about = "Strong-drive pulse design for two-level spins")]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Run configuration (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Output directory.
    #[arg(long, global = true, env = "SPINPULSE_OUT_DIR", default_value = ".")]
    out: PathBuf,

    /// Recorded in the provenance of every output.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,

    /// Worker threads; 0 lets the runtime decide.
    #[arg(long, global = true, env = "SPINPULSE_THREADS", default_value_t = 0)]
    threads: usize,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Propagate one pulse; writes trajectory.csv and summary.json.
    Simulate,
    /// Fidelity landscapes over phase and offset, with refined optima.
    Landscape,
    /// Optimal control vs offset-sine comparison over an amplitude suite.
    Oct,
    /// Spiral antenna field map and NV-frame projection.
    Spiral,
    /// Rabi and ODMR fits from CSV data.
    Fit,
}

fn run(cli: &Cli) -> Result<()> {
    if cli.threads > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(cli.threads)
            .build_global()
            .map_err(|e| Error::Contract(format!("thread pool: {e}")))?;
    }
    let config_path = cli
        .config
        .clone()
        .ok_or_else(|| Error::Contract("--config is required".into()))?;
    let text = std::fs::read_to_string(&config_path)
        .map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", config_path.display()))))?;
    let mut out = Run::new(cli.out.clone(), &config_path, &text, cli.seed)?;
    match cli.command {
        Command::Simulate => commands::simulate(&mut out, &parse_toml(&text)?)?,
        Command::Landscape => commands::landscape(&mut out, &parse_toml(&text)?)?,
        Command::Oct => {
            for w in commands::oct(&mut out, &parse_toml(&text)?)? {
                eprintln!("warning: {w}");
            }
        }
        Command::Spiral => commands::spiral(&mut out, &parse_toml(&text)?)?,
        Command::Fit => commands::fit(&mut out, &parse_toml(&text)?)?,
    }
    for path in out.written() {
        println!("{}", path.display());
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
