//! Command-line front end: dataset generation, single runs, optimizer
//! comparison, batch-size regime sweeps, stability phase diagrams, a quick
//! verification battery, and SVG plots of the emitted CSVs.

mod commands;
mod config;
mod plot;

use anyhow::Context;
use clap::{Parser, Subcommand};
use std::path::PathBuf;

#[derive(Parser)]
#[command(
    name = "masslab",
    about = "momentum-added stochastic solvers for interpolated least squares",
    version
)]
struct Cli {
    /// TOML configuration file (required by every command except plot).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the experiment seed from the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Caps the number of parallel workers.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a dataset CSV and its spectral profile report.
    Generate,
    /// Run one optimizer and write its trajectory CSV plus manifest.
    Run,
    /// Grid-search the baselines against untuned MaSS.
    Compare,
    /// Sweep MaSS across mini-batch sizes.
    Regimes,
    /// Stability phase diagram of SGD+Nesterov second moments.
    NesterovPhase,
    /// Quick pass/fail verification battery; exit code 1 on failure.
    Verify,
    /// Render SVG line plots from result CSVs.
    Plot {
        /// loss | regimes (inferred from the CSV header when omitted).
        #[arg(long)]
        kind: Option<String>,
        /// CSV files to plot.
        csvs: Vec<PathBuf>,
    },
}

fn main() -> anyhow::Result<()> {
    let cli = Cli::parse();
    let jobs = cli.jobs;
    let run = move || -> anyhow::Result<i32> {
        let load = || -> anyhow::Result<config::Config> {
            let path = cli
                .config
                .as_ref()
                .context("--config <path> is required for this command")?;
            config::load_config(path)
        };
        match &cli.command {
            Command::Generate => commands::cmd_generate(&load()?, &cli.out)?,
            Command::Run => commands::cmd_run(&load()?, &cli.out, cli.seed)?,
            Command::Compare => commands::cmd_compare(&load()?, &cli.out, cli.seed)?,
            Command::Regimes => commands::cmd_regimes(&load()?, &cli.out, cli.seed)?,
            Command::NesterovPhase => commands::cmd_nesterov_phase(&load()?, &cli.out)?,
            Command::Verify => {
                let ok = commands::cmd_verify(&load()?, &cli.out, cli.seed)?;
                return Ok(if ok { 0 } else { 1 });
            }
            Command::Plot { kind, csvs } => commands::cmd_plot(kind.as_deref(), csvs, &cli.out)?,
        }
        Ok(0)
    };
    let code = match jobs {
        Some(n) => masslab::par::with_max_threads(n.max(1), run)?,
        None => run()?,
    };
    if code != 0 {
        std::process::exit(code);
    }
    Ok(())
}
