use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};

use ddsim_cli::{run_experiment, verify_cycle_text, write_bounds, CycleVerdict, ExperimentConfig, WORKERS_ENV};

/// Exact simulation of deterministic, randomized and embedded dynamical decoupling.
#[derive(Parser)]
#[command(version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every scheme of a config and write traces and scalars.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Output directory; defaults to the config's `output` field.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Check that a cycle averages out every Pauli term up to a locality.
    ///
    /// Exits 0 when decoupled, 1 with the first violating term, 2 on parse errors.
    VerifyCycle {
        #[arg(long)]
        cycle: PathBuf,
        #[arg(long, default_value_t = 2)]
        locality: usize,
    },
    /// Evaluate all bounds and approximations on the config's time grid.
    Bounds {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

fn init_workers() -> Result<()> {
    if let Ok(v) = std::env::var(WORKERS_ENV) {
        let n: usize = v
            .trim()
            .parse()
            .with_context(|| format!("{WORKERS_ENV}={v:?} is not a thread count"))?;
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("configuring the worker pool")?;
    }
    Ok(())
}

fn run(cli: Cli) -> Result<ExitCode> {
    init_workers()?;
    match cli.command {
        Command::Run { config, out } => {
            let cfg = ExperimentConfig::load(&config)?;
            let out = out
                .or_else(|| cfg.output.clone())
                .context("no output directory: pass --out or set `output` in the config")?;
            let output = run_experiment(&cfg, &out)?;
            for (run, trace) in &output.traces {
                println!(
                    "{:<10} {:>7} samples, final fidelity {:.6}",
                    run.kind.as_str(),
                    trace.len(),
                    trace.mean_fidelity.last().copied().unwrap_or(f64::NAN)
                );
            }
            println!("wrote {}", out.display());
        }
        Command::VerifyCycle { cycle, locality } => {
            let text = match fs::read_to_string(&cycle) {
                Ok(t) => t,
                Err(e) => {
                    eprintln!("error: reading {}: {e}", cycle.display());
                    return Ok(ExitCode::from(2));
                }
            };
            return Ok(match verify_cycle_text(&text, locality) {
                Ok(CycleVerdict::Decoupled) => {
                    println!("decoupled up to locality {locality}");
                    ExitCode::SUCCESS
                }
                Ok(CycleVerdict::Violation(p)) => {
                    println!("not decoupled: {p}");
                    ExitCode::from(1)
                }
                Err(e) => {
                    eprintln!("error: {}: {e}", cycle.display());
                    ExitCode::from(2)
                }
            });
        }
        Command::Bounds { config, out } => {
            let cfg = ExperimentConfig::load(&config)?;
            let table = write_bounds(&cfg, &out)?;
            println!("wrote {} rows to {}", table.times.len(), out.display());
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(3)
        }
    }
}
