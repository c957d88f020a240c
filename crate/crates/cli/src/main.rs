//! Command-line front end for the Monte Carlo harness.

use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use groupsbl::harness::{emit_csv, preset, run_monte_carlo, ExperimentConfig};

#[derive(Parser)]
#[command(name = "groupsbl", version, about = "Joint channel estimation and user grouping experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the sweep described by a key-value config file.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[command(flatten)]
        common: Overrides,
    },
    /// Run a named preset: fig2a, fig2b, fig3a, fig3b or fig6.
    Sweep {
        preset: String,
        #[command(flatten)]
        common: Overrides,
    },
}

#[derive(Args)]
struct Overrides {
    /// Trials per sweep value.
    #[arg(long)]
    trials: Option<usize>,
    /// Worker threads (default: all cores).
    #[arg(long)]
    threads: Option<usize>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn execute(mut cfg: ExperimentConfig, o: Overrides) -> Result<()> {
    if let Some(t) = o.trials {
        cfg.n_trials = t;
    }
    if let Some(out) = o.out {
        cfg.output = out;
    }
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(n) = o.threads {
        pool = pool.num_threads(n);
    }
    let pool = pool.build().context("building the worker pool")?;
    log::info!(
        "{} values x {} trials x {} methods",
        cfg.values.len(),
        cfg.n_trials,
        cfg.methods.len()
    );
    let records = pool.install(|| run_monte_carlo(&cfg))?;
    let files = emit_csv(&records, cfg.sweep.name(), &cfg.output)?;
    print!("{}", std::fs::read_to_string(&files.summary)?);
    println!("wrote {}", cfg.output.display());
    Ok(())
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match Cli::parse().command {
        Command::Run { config, common } => {
            let cfg = ExperimentConfig::from_file(&config).with_context(|| format!("reading {}", config.display()))?;
            execute(cfg, common)
        }
        Command::Sweep { preset: name, common } => execute(preset(&name)?, common),
    }
}
