//! `circulon <subcommand> --config <file> [--out <dir>] [--seed <u64>] [--threads <n>]`
//!
//! Exit codes: 0 success, 2 configuration or input error, 3 numerical or
//! output failure, 4 optimization did not converge.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(name = "circulon", version, about = "Rydberg circularization: models, pulses, optimal control")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Assemble the Stark basis model and write it as a JSON bundle.
    BuildModel(#[command(flatten)] Common),
    /// Propagate the initial state through the configured pulse.
    Propagate(#[command(flatten)] Common),
    /// Optimize the configured guess pulse with Krotov's method.
    Optimize(#[command(flatten)] Common),
    /// RF-amplitude noise, DC-offset and coarse-graining studies.
    NoiseSweep(#[command(flatten)] Common),
    /// Unconstrained optimizations over a range of pulse durations.
    QslSweep(#[command(flatten)] Common),
    /// Demodulate the configured pulse into its quadrature envelope.
    Demodulate(#[command(flatten)] Common),
}

#[derive(clap::Args)]
struct Common {
    #[arg(long)]
    config: PathBuf,
    /// Output directory (overrides `out_dir`).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Overrides `seed`.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides `threads`; 0 uses every core.
    #[arg(long)]
    threads: Option<usize>,
}

/// Failure classes, each with its own exit code.
#[derive(Debug)]
pub enum Failure {
    Config(String),
    Numeric(String),
    Unconverged(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Config(_) => 2,
            Failure::Numeric(_) => 3,
            Failure::Unconverged(_) => 4,
        }
    }
}

impl std::fmt::Display for Failure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Failure::Config(m) => write!(f, "configuration error: {m}"),
            Failure::Numeric(m) => write!(f, "run failed: {m}"),
            Failure::Unconverged(m) => write!(f, "not converged: {m}"),
        }
    }
}

type RunFn = fn(&commands::Context) -> Result<serde_json::Value, Failure>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (common, run): (Common, RunFn) = match cli.command {
        Command::BuildModel(c) => (c, commands::build_model),
        Command::Propagate(c) => (c, commands::propagate),
        Command::Optimize(c) => (c, commands::optimize),
        Command::NoiseSweep(c) => (c, commands::noise_sweep),
        Command::QslSweep(c) => (c, commands::qsl_sweep),
        Command::Demodulate(c) => (c, commands::demodulate),
    };
    let outcome = commands::Context::load(&common.config, common.out, common.seed, common.threads).and_then(|ctx| {
        let summary = run(&ctx)?;
        ctx.write_summary(&summary)?;
        Ok(summary)
    });
    match outcome {
        Ok(summary) => {
            println!("{}", serde_json::to_string_pretty(&summary).unwrap_or_default());
            ExitCode::SUCCESS
        }
        Err(f) => {
            eprintln!("circulon: {f}");
            ExitCode::from(f.code())
        }
    }
}
