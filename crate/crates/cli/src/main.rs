use std::net::SocketAddr;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use mgrit_cli::drivers::{self, Launcher};
use mgrit_cli::report::seconds;
use mgrit_cli::ExperimentConfig;

#[derive(Parser)]
#[command(name = "mgrit", version, about = "Parallel-in-time experiments with MGRIT")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Experiment file with `section.key = value` lines.
    #[arg(long)]
    config: PathBuf,
    /// Output directory (overrides `output.dir`).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Random seed (overrides `run.seed`).
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Solve once and write iterations.csv and summary.csv.
    Run {
        #[command(flatten)]
        common: Common,
        /// Worker count (overrides `run.workers`).
        #[arg(long)]
        workers: Option<usize>,
    },
    /// Run every variant and write comparison.csv.
    Compare {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        workers: Option<usize>,
    },
    /// Strong scaling against sequential stepping; writes scaling.csv.
    Scale {
        #[command(flatten)]
        common: Common,
        /// Comma-separated worker counts (overrides `scale.workers`).
        #[arg(long, value_delimiter = ',')]
        workers: Option<Vec<usize>>,
    },
    #[command(hide = true)]
    Worker {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        rank: usize,
        #[arg(long)]
        size: usize,
        #[arg(long)]
        root: SocketAddr,
    },
}

fn load(path: &Path) -> Result<ExperimentConfig> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let cfg = ExperimentConfig::parse(&text).with_context(|| format!("in {}", path.display()))?;
    Ok(cfg)
}

fn prepare(common: &Common) -> Result<(ExperimentConfig, PathBuf)> {
    let mut cfg = load(&common.config)?;
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    let out = common.out.clone().unwrap_or_else(|| cfg.out_dir.clone());
    cfg.out_dir = out.clone();
    cfg.validate()?;
    Ok((cfg, out))
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    let launcher = Launcher {
        exe: std::env::current_exe().ok(),
    };
    match cli.command {
        Command::Run { common, workers } => {
            let (cfg, out) = prepare(&common)?;
            let p = workers.unwrap_or(cfg.workers);
            let run = drivers::run(&cfg, p, &out, &launcher)?;
            println!(
                "{} iterations, converged={}, residual={:e}, total {} s",
                run.iterations,
                run.converged(),
                run.residual_history.last().copied().unwrap_or(run.initial_residual),
                seconds(run.total_s())
            );
        }
        Command::Compare { common, workers } => {
            let (cfg, out) = prepare(&common)?;
            let rows = drivers::compare(&cfg, workers.unwrap_or(cfg.workers), &out, &launcher)?;
            for r in rows {
                println!(
                    "{:<24} {:<8} converged={:<5} iterations={:<4} total={} s",
                    r.variant,
                    r.sc_strategy,
                    r.converged,
                    r.iterations,
                    seconds(r.total_s)
                );
            }
        }
        Command::Scale { common, workers } => {
            let (cfg, out) = prepare(&common)?;
            let counts = workers.unwrap_or_else(|| cfg.scale_workers.clone());
            let (t_seq, rows) = drivers::scale(&cfg, &counts, &out, &launcher)?;
            println!("sequential {} s", seconds(t_seq));
            for r in rows {
                println!("p={:<3} total={} s speedup={:.3}", r.workers, seconds(r.total_s), r.speedup);
            }
        }
        Command::Worker {
            config,
            rank,
            size,
            root,
        } => drivers::worker(&load(&config)?, rank, size, root)?,
    }
    Ok(())
}
