//! Experiment drivers behind the CLI subcommands.

use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::{Command, Stdio};
use std::time::Instant;

use anyhow::{bail, Context, Result};
use mgrit_core::excitation::Forcing;
use mgrit_core::integrators::sequential_solve;
use mgrit_core::mgrit::{mgrit_solve, solve_on_transport};
use mgrit_core::runtime::{TcpRendezvous, TcpTransport};
use mgrit_core::{SolveResult, SolverRun};

use crate::config::{strategy_name, ExperimentConfig, TransportKind};
use crate::report::{self, ComparisonRow, ScalingRow};

/// How extra worker processes are started for the TCP transport.
#[derive(Debug, Clone, Default)]
pub struct Launcher {
    /// Executable that understands the hidden `worker` subcommand.
    pub exe: Option<PathBuf>,
}

/// Solves the configured problem on `workers` workers. Hierarchy
/// construction counts as setup time.
pub fn execute(cfg: &ExperimentConfig, workers: usize, launcher: &Launcher) -> Result<SolveResult<f64>> {
    cfg.validate()?;
    let start = Instant::now();
    let problem = cfg.build_problem()?;
    let hierarchy = cfg.build_hierarchy(workers)?;
    let setup = start.elapsed().as_secs_f64();
    let opts = cfg.mgrit_options();
    let mut result = match cfg.transport {
        TransportKind::Threads => mgrit_solve(&problem, &hierarchy, &opts, workers)?,
        TransportKind::Tcp => {
            let exe = launcher
                .exe
                .as_deref()
                .context("runtime.transport = tcp needs the mgrit executable to start workers")?;
            let root = TcpRendezvous::bind()?;
            let addr = root.addr()?;
            let cfg_path = std::env::temp_dir().join(format!("mgrit-worker-{}-{}.cfg", std::process::id(), addr.port()));
            std::fs::write(&cfg_path, cfg.serialize())?;
            let children = (1..workers)
                .map(|rank| {
                    Command::new(exe)
                        .arg("worker")
                        .arg("--config")
                        .arg(&cfg_path)
                        .args(["--rank", &rank.to_string(), "--size", &workers.to_string()])
                        .args(["--root", &addr.to_string()])
                        .stdin(Stdio::null())
                        .stdout(Stdio::null())
                        .spawn()
                        .with_context(|| format!("starting worker {rank}"))
                })
                .collect::<Result<Vec<_>>>();
            let outcome = children.and_then(|mut children| {
                let transport = root.accept_all::<f64>(workers)?;
                let out = solve_on_transport(&problem, &hierarchy, &opts, transport)?;
                for c in &mut children {
                    let status = c.wait()?;
                    if !status.success() {
                        bail!("worker process exited with {status}");
                    }
                }
                Ok(SolveResult {
                    run: out.run,
                    solution: out.solution,
                })
            });
            let _ = std::fs::remove_file(&cfg_path);
            outcome?
        }
    };
    result.run.setup_s += setup;
    Ok(result)
}

/// Body of a worker process started by [`execute`].
pub fn worker(cfg: &ExperimentConfig, rank: usize, size: usize, root: SocketAddr) -> Result<()> {
    let problem = cfg.build_problem()?;
    let hierarchy = cfg.build_hierarchy(size)?;
    let transport = TcpTransport::<f64>::connect(rank, size, root)?;
    solve_on_transport(&problem, &hierarchy, &cfg.mgrit_options(), transport)?;
    Ok(())
}

/// Single run; writes `iterations.csv` and `summary.csv` into `out`.
pub fn run(cfg: &ExperimentConfig, workers: usize, out: &Path, launcher: &Launcher) -> Result<SolverRun> {
    std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let result = execute(cfg, workers, launcher)?;
    report::write_iterations(&out.join("iterations.csv"), &result.run)?;
    report::write_summary(&out.join("summary.csv"), &result.run)?;
    Ok(result.run)
}

/// Runs every variant (or the base config alone) and writes
/// `comparison.csv` plus per-variant run files under `out/<variant>/`.
pub fn compare(cfg: &ExperimentConfig, workers: usize, out: &Path, launcher: &Launcher) -> Result<Vec<ComparisonRow>> {
    std::fs::create_dir_all(out)?;
    let variants: Vec<(String, ExperimentConfig)> = if cfg.variants.is_empty() {
        vec![("base".to_string(), cfg.clone())]
    } else {
        cfg.variants
            .iter()
            .map(|v| Ok((v.name.clone(), cfg.for_variant(v)?)))
            .collect::<Result<_>>()?
    };
    let mut rows = Vec::new();
    for (name, vcfg) in &variants {
        let row = match run(vcfg, workers, &out.join(name), launcher) {
            Ok(r) => ComparisonRow {
                variant: name.clone(),
                sc_strategy: strategy_name(vcfg.cycle.spatial_strategy).to_string(),
                converged: r.converged(),
                iterations: r.iterations,
                total_s: r.total_s(),
                speedup: None,
            },
            Err(e) => {
                eprintln!("variant {name}: {e:#}");
                ComparisonRow {
                    variant: name.clone(),
                    sc_strategy: strategy_name(vcfg.cycle.spatial_strategy).to_string(),
                    converged: false,
                    iterations: 0,
                    total_s: 0.0,
                    speedup: None,
                }
            }
        };
        rows.push(row);
    }
    let reference = cfg.reference.clone().unwrap_or_else(|| variants[0].0.clone());
    let reference_time = rows
        .iter()
        .find(|r| r.variant == reference && r.converged)
        .map(|r| r.total_s);
    if let Some(t_ref) = reference_time {
        for r in rows.iter_mut().filter(|r| r.converged) {
            r.speedup = Some(if r.variant == reference { 1.0 } else { t_ref / r.total_s });
        }
    }
    report::write_comparison(&out.join("comparison.csv"), &rows)?;
    Ok(rows)
}

/// Strong scaling against sequential time stepping; writes `scaling.csv`.
/// A one-worker row is always included.
pub fn scale(cfg: &ExperimentConfig, workers: &[usize], out: &Path, launcher: &Launcher) -> Result<(f64, Vec<ScalingRow>)> {
    cfg.validate()?;
    std::fs::create_dir_all(out)?;
    let mut counts = workers.to_vec();
    if !counts.contains(&1) {
        counts.insert(0, 1);
    }
    let problem = cfg.build_problem()?;
    let fine = cfg.build_hierarchy(1)?.grids.swap_remove(0);
    let start = Instant::now();
    sequential_solve(&problem, &fine, Forcing::Pwm)?;
    let t_seq = start.elapsed().as_secs_f64();

    let mut rows = Vec::new();
    for &p in &counts {
        let result = execute(cfg, p, launcher)?;
        if !result.run.converged() {
            eprintln!("{p} workers: run did not converge ({:?})", result.run.outcome);
        }
        let total = result.run.total_s();
        let speedup = t_seq / total;
        rows.push(ScalingRow {
            workers: p,
            total_s: total,
            speedup,
            efficiency: speedup / p as f64,
        });
    }
    report::write_scaling(&out.join("scaling.csv"), &rows)?;
    Ok((t_seq, rows))
}
