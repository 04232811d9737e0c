#![allow(dead_code)]

use mgrit_core::excitation::Forcing;
use mgrit_core::integrators::{
    sequential_solve, FieldParams, LinearDiffusionProblem, ModelProblem, NewtonControls, NonlinearSaturationProblem,
    Reluctivity,
};
use mgrit_core::mgrit::{CycleSpec, CycleType, MgritOptions, StoppingCriterion};
use mgrit_core::spatial::SpatialStrategy;
use mgrit_core::state::SpaceTimeVector;
use mgrit_core::time_grid::{build_uniform_grid, TimeHierarchy};

pub const PERIOD: f64 = 0.02;

pub fn linear(n_x: usize, n_grids: usize) -> ModelProblem<f64> {
    let params = FieldParams {
        n_x,
        n_grids,
        ..FieldParams::default()
    };
    ModelProblem::Linear(LinearDiffusionProblem::new(params, 1.0).unwrap())
}

pub fn nonlinear(n_x: usize, n_grids: usize) -> ModelProblem<f64> {
    let params = FieldParams {
        n_x,
        n_grids,
        ..FieldParams::default()
    };
    ModelProblem::Nonlinear(
        NonlinearSaturationProblem::new(params, Reluctivity::default(), NewtonControls::default()).unwrap(),
    )
}

/// `levels` levels with factor `m` between each pair, over one period.
pub fn hierarchy(n_t: usize, m: usize, levels: usize) -> TimeHierarchy<f64> {
    let fine = build_uniform_grid(0.0, PERIOD, n_t).unwrap();
    TimeHierarchy::new(fine, &vec![m; levels - 1], 2).unwrap()
}

pub fn options(cycle_type: CycleType, gamma: usize, strategy: SpatialStrategy) -> MgritOptions<f64> {
    MgritOptions {
        cycle: CycleSpec {
            cycle_type,
            gamma,
            max_iters: 50,
            spatial_strategy: strategy,
            nested_iterations: false,
        },
        stopping: StoppingCriterion::residual(1e-10),
        ..MgritOptions::default()
    }
}

pub fn oracle(problem: &ModelProblem<f64>, h: &TimeHierarchy<f64>) -> SpaceTimeVector<f64> {
    sequential_solve(problem, &h.grids[0], Forcing::Pwm).unwrap()
}

pub fn max_diff(a: &SpaceTimeVector<f64>, b: &SpaceTimeVector<f64>) -> f64 {
    a.max_abs_diff(b).unwrap()
}
