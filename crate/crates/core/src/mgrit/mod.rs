//! Multigrid reduction in time with the full approximation scheme.
//!
//! Each level `l` solves `A_l(u) = g_l` where `(A_l u)_i = u_i - Phi_l(u_{i-1})`.
//! Relaxation alternates F-sweeps (propagate from each C-point across its
//! F-points) and C-sweeps (update each C-point from its left neighbour).
//! The coarse problem is `A_{l+1}(v) = A_{l+1}(R u) + R r` and the
//! correction `v - R u` is added at C-points, then F-relaxed.

mod relax;
mod solver;

use thiserror::Error;

pub use relax::{c_relaxation, f_relaxation, RelaxError};
pub use solver::{mgrit_solve, solve_on_transport, SolveResult, WorkerOutput};

use crate::excitation::Forcing;
use crate::integrators::joule_loss;
use crate::scalar::Real;
use crate::spatial::SpatialStrategy;
use crate::state::SpaceTimeVector;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CycleType {
    #[default]
    V,
    F,
    /// Only the two finest levels; the second one is solved sequentially.
    TwoLevel,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CycleSpec {
    pub cycle_type: CycleType,
    /// Number of extra (C, F) sweep pairs after the first F-sweep.
    pub gamma: usize,
    pub max_iters: usize,
    pub spatial_strategy: SpatialStrategy,
    pub nested_iterations: bool,
}

impl Default for CycleSpec {
    fn default() -> Self {
        Self {
            cycle_type: CycleType::V,
            gamma: 1,
            max_iters: 50,
            spatial_strategy: SpatialStrategy::None,
            nested_iterations: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum StoppingKind {
    /// Global L2 norm of the fine space-time residual.
    #[default]
    ResidualNorm,
    /// Largest relative change of the Joule loss at fine C-points between
    /// two iterates.
    QoiChange,
    /// Run exactly `max_iters` cycles.
    FixedIterations,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StoppingCriterion {
    pub kind: StoppingKind,
    pub tolerance: f64,
}

impl StoppingCriterion {
    pub fn residual(tolerance: f64) -> Self {
        Self {
            kind: StoppingKind::ResidualNorm,
            tolerance,
        }
    }

    pub fn qoi(tolerance: f64) -> Self {
        Self {
            kind: StoppingKind::QoiChange,
            tolerance,
        }
    }

    pub fn fixed() -> Self {
        Self {
            kind: StoppingKind::FixedIterations,
            tolerance: f64::INFINITY,
        }
    }

    /// Whether the iterate after `iteration` cycles is accepted.
    pub fn is_met(&self, iteration: usize, residual: f64, qoi: Option<f64>) -> bool {
        match self.kind {
            StoppingKind::ResidualNorm => residual <= self.tolerance,
            StoppingKind::QoiChange => iteration >= 1 && qoi.is_some_and(|q| q < self.tolerance),
            StoppingKind::FixedIterations => false,
        }
    }
}

/// Starting values at the fine C-points.
#[derive(Debug, Clone, PartialEq, Default)]
pub enum InitialGuess<T> {
    /// The initial condition copied to every point.
    #[default]
    Initial,
    Zero,
    /// Uniform values in `[-1, 1]`, reproducible from the seed.
    Random(u64),
    /// A full fine-level vector starting at index 0.
    Provided(SpaceTimeVector<T>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct MgritOptions<T> {
    pub cycle: CycleSpec,
    pub stopping: StoppingCriterion,
    pub initial_guess: InitialGuess<T>,
    /// Forcing of the main iterations.
    pub forcing: Forcing,
    /// Forcing used while computing the nested-iteration initial guess.
    pub nested_forcing: Forcing,
}

impl<T> Default for MgritOptions<T> {
    fn default() -> Self {
        Self {
            cycle: CycleSpec::default(),
            stopping: StoppingCriterion::residual(1e-8),
            initial_guess: InitialGuess::Initial,
            forcing: Forcing::Pwm,
            nested_forcing: Forcing::Reference,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum RunOutcome {
    Converged,
    /// Stopped after `max_iters` cycles without meeting the criterion.
    MaxIterations,
    Failed(String),
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct StorageReport {
    /// Largest number of stored states on any worker.
    pub states: usize,
    /// Largest number of stored values (states weighted by their length).
    pub units: usize,
    /// Per level, the largest number of stored states on any worker.
    pub per_level: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverRun {
    pub workers: usize,
    pub levels: usize,
    /// Completed cycles.
    pub iterations: usize,
    /// Residual norm of the initial guess (after one F-sweep).
    pub initial_residual: f64,
    /// Residual norm after each cycle.
    pub residual_history: Vec<f64>,
    /// Loss change after each cycle.
    pub qoi_history: Vec<f64>,
    /// Seconds since the start of the solve phase at each history entry.
    pub iteration_times: Vec<f64>,
    /// Seconds spent in sweeps and solves per level on worker 0.
    pub level_times: Vec<f64>,
    pub setup_s: f64,
    pub solve_s: f64,
    pub newton_iterations: u64,
    pub storage: StorageReport,
    pub outcome: RunOutcome,
}

impl SolverRun {
    pub fn converged(&self) -> bool {
        self.outcome == RunOutcome::Converged
    }

    pub fn total_s(&self) -> f64 {
        self.setup_s + self.solve_s
    }
}

const QOI_FLOOR: f64 = 1e-30;

/// `max_c |P_k - P_{k-1}| / max(|P_{k-1}|, 1e-30)` over loss values at C-points.
pub fn qoi_change(previous: &[f64], current: &[f64]) -> f64 {
    previous
        .iter()
        .zip(current)
        .map(|(&p, &c)| (c - p).abs() / p.abs().max(QOI_FLOOR))
        .fold(0.0, f64::max)
}

/// Joule loss at every C-point `c > 0` of a full fine vector, from the step
/// `c - 1 -> c`.
pub fn losses_at_c_points<T: Real>(u: &SpaceTimeVector<T>, times: &[T], m: usize, weights: &[T]) -> Vec<f64> {
    (1..u.len())
        .filter(|i| i % m == 0)
        .map(|c| joule_loss(&u.states[c - 1], &u.states[c], times[c] - times[c - 1], weights).as_f64())
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StorageEstimate {
    pub total: usize,
    /// Units attributed to each level (C-point states plus, on coarse
    /// levels, the restricted copy and right-hand side).
    pub per_level: Vec<usize>,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum StorageError {
    #[error("need one factor and one state size per level ({levels} levels, {factors} factors, {sizes} sizes)")]
    Lengths {
        levels: usize,
        factors: usize,
        sizes: usize,
    },
    #[error("worker count must be positive")]
    NoWorkers,
}

/// Stored values per worker: `sum_{l<L} ceil(N_t / (M_{l+1} p)) s_l +
/// sum_{1<=l<L} 2 ceil(N_t / (M_l p)) s_l`, where `M_l` is the product of
/// the first `l` factors and `factors[L-1]` is the coarsest level's own
/// C/F factor.
pub fn storage_estimate(
    levels: usize,
    n_t: usize,
    factors: &[usize],
    workers: usize,
    sizes: &[usize],
) -> Result<StorageEstimate, StorageError> {
    if factors.len() < levels || sizes.len() < levels || levels == 0 {
        return Err(StorageError::Lengths {
            levels,
            factors: factors.len(),
            sizes: sizes.len(),
        });
    }
    if workers == 0 {
        return Err(StorageError::NoWorkers);
    }
    let mut per_level = vec![0; levels];
    let mut big_m = 1usize;
    for l in 0..levels {
        let m_l = big_m;
        big_m *= factors[l];
        per_level[l] += n_t.div_ceil(big_m * workers) * sizes[l];
        if l >= 1 {
            per_level[l] += 2 * n_t.div_ceil(m_l * workers) * sizes[l];
        }
    }
    Ok(StorageEstimate {
        total: per_level.iter().sum(),
        per_level,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn storage_examples() {
        assert_eq!(storage_estimate(2, 32, &[4, 4], 1, &[1, 1]).unwrap().total, 26);
        assert_eq!(storage_estimate(2, 32, &[4, 4], 4, &[1, 1]).unwrap().total, 7);
        assert_eq!(storage_estimate(1, 32, &[4], 2, &[3]).unwrap().total, 12);
        assert!(storage_estimate(2, 32, &[4], 1, &[1, 1]).is_err());
        assert_eq!(storage_estimate(1, 32, &[4], 0, &[1]), Err(StorageError::NoWorkers));
    }

    #[test]
    fn qoi_examples() {
        assert_eq!(qoi_change(&[1.0, 2.0], &[1.0, 2.0]), 0.0);
        assert_eq!(qoi_change(&[1.0, 5.0], &[2.0, 5.0]), 1.0);
        assert_eq!(qoi_change(&[0.0], &[0.0]), 0.0);
        let c = StoppingCriterion::qoi(1e-2);
        assert!(!c.is_met(0, 0.0, None));
        assert!(c.is_met(3, 1.0, Some(0.009)));
        assert!(!c.is_met(3, 1.0, Some(0.011)));
    }

    #[test]
    fn fixed_iterations_never_stop_early() {
        assert!(!StoppingCriterion::fixed().is_met(5, 0.0, Some(0.0)));
        assert!(StoppingCriterion::residual(1e-8).is_met(0, 1e-9, None));
    }
}
