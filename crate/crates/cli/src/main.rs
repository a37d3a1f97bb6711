mod config;

use std::io;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use f2fsim_core::experiments::{derive_seed, sweep};
use f2fsim_core::graph::{generate_synthetic, load_edge_list};
use f2fsim_core::{run_scenario, write_csv, write_csv_to, GraphSource, GraphStats, MetricRow};
use log::info;

use config::{parse_list, parse_strategies, Settings};

/// Simulates routing over multiple tree embeddings of a friend-to-friend
/// graph and reports routing, stabilization and overlay metrics as CSV.
#[derive(Debug, Parser)]
#[command(name = "f2fsim", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run one scenario.
    Run {
        #[command(flatten)]
        common: Common,
    },
    /// One scenario per (gamma, strategy), routing in all trees.
    Sweep {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value = "1,2,3,5,7,10,12,15")]
        gammas: String,
        #[arg(long, default_value = "BFS,DIV-RAND,DIV-DEP")]
        strategies: String,
    },
    /// Print size, giant component, diameter estimate and mean degree.
    Stats {
        /// Edge-list path, or `pa:N:M` / `er:N:P`.
        #[arg(long)]
        graph: String,
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
}

#[derive(Debug, clap::Args)]
struct Common {
    /// TOML file with the same keys as the flags; flags win.
    #[arg(long)]
    config: Option<PathBuf>,
    /// CSV destination; standard output if absent.
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    settings: Settings,
}

impl Common {
    fn settings(&self) -> Result<Settings> {
        let file = match &self.config {
            Some(p) => Settings::from_file(p)?,
            None => Settings::default(),
        };
        Ok(self.settings.clone().over(file))
    }

    fn emit(&self, rows: &[MetricRow]) -> Result<()> {
        match &self.out {
            Some(p) => {
                write_csv(rows, p).with_context(|| format!("writing {}", p.display()))?;
                info!("wrote {} rows to {}", rows.len(), p.display());
            }
            None => write_csv_to(rows, io::stdout().lock())?,
        }
        Ok(())
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run { common } => {
            let scenario = common.settings()?.scenario()?;
            let rows = run_scenario(&scenario)?;
            common.emit(&rows)
        }
        Command::Sweep {
            common,
            gammas,
            strategies,
        } => {
            let scenario = common.settings()?.scenario()?;
            let gammas: Vec<usize> = parse_list(&gammas)?;
            let strategies = parse_strategies(&strategies)?;
            let rows = sweep(&scenario, &gammas, &strategies)?;
            common.emit(&rows)
        }
        Command::Stats { graph, seed } => {
            // The whole graph, not just its giant component.
            let g = match config::parse_graph(&graph)? {
                GraphSource::EdgeList(p) => load_edge_list(&p),
                GraphSource::Synthetic { model, n } => generate_synthetic(model, n, derive_seed(seed, b"graph", &[])),
                GraphSource::Fixed(g) => Ok(g.as_ref().clone()),
            }
            .with_context(|| format!("loading {graph}"))?;
            println!("{}", GraphStats::CSV_HEADER);
            println!("{}", g.stats().csv_row());
            Ok(())
        }
    }
}
