//! CSV outputs. Column order is fixed; times are seconds with three decimals.

use std::path::Path;

use mgrit_core::SolverRun;

pub const ITERATIONS_HEADER: [&str; 4] = ["iteration", "residual_norm", "qoi_change", "wall_time_s"];
pub const SUMMARY_HEADER: [&str; 6] = ["iterations", "setup_s", "solve_s", "total_s", "converged", "storage_units"];
pub const COMPARISON_HEADER: [&str; 6] = [
    "variant",
    "sc_strategy",
    "converged",
    "iterations",
    "total_s",
    "speedup_vs_reference",
];
pub const SCALING_HEADER: [&str; 4] = ["workers", "total_s", "speedup", "efficiency"];

pub fn seconds(s: f64) -> String {
    format!("{s:.3}")
}

fn number(v: f64) -> String {
    if v.is_finite() {
        format!("{v:e}")
    } else {
        String::new()
    }
}

fn write_rows(path: &Path, header: &[&str], rows: &[Vec<String>]) -> csv::Result<()> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_path(path)?;
    w.write_record(header)?;
    for r in rows {
        w.write_record(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_iterations(path: &Path, run: &SolverRun) -> csv::Result<()> {
    let rows: Vec<Vec<String>> = (0..run.residual_history.len())
        .map(|k| {
            vec![
                (k + 1).to_string(),
                number(run.residual_history[k]),
                number(run.qoi_history.get(k).copied().unwrap_or(f64::NAN)),
                seconds(run.iteration_times.get(k).copied().unwrap_or(f64::NAN)),
            ]
        })
        .collect();
    write_rows(path, &ITERATIONS_HEADER, &rows)
}

pub fn write_summary(path: &Path, run: &SolverRun) -> csv::Result<()> {
    let row = vec![
        run.iterations.to_string(),
        seconds(run.setup_s),
        seconds(run.solve_s),
        seconds(run.total_s()),
        run.converged().to_string(),
        run.storage.units.to_string(),
    ];
    write_rows(path, &SUMMARY_HEADER, &[row])
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonRow {
    pub variant: String,
    pub sc_strategy: String,
    pub converged: bool,
    pub iterations: usize,
    pub total_s: f64,
    /// Absent when this variant or the reference did not converge.
    pub speedup: Option<f64>,
}

pub fn write_comparison(path: &Path, rows: &[ComparisonRow]) -> csv::Result<()> {
    let rows: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            vec![
                r.variant.clone(),
                r.sc_strategy.clone(),
                r.converged.to_string(),
                r.iterations.to_string(),
                seconds(r.total_s),
                r.speedup.map(|s| format!("{s:.3}")).unwrap_or_default(),
            ]
        })
        .collect();
    write_rows(path, &COMPARISON_HEADER, &rows)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScalingRow {
    pub workers: usize,
    pub total_s: f64,
    pub speedup: f64,
    pub efficiency: f64,
}

pub fn write_scaling(path: &Path, rows: &[ScalingRow]) -> csv::Result<()> {
    let rows: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            vec![
                r.workers.to_string(),
                seconds(r.total_s),
                format!("{:.3}", r.speedup),
                format!("{:.3}", r.efficiency),
            ]
        })
        .collect();
    write_rows(path, &SCALING_HEADER, &rows)
}
