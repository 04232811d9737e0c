mod common;

use common::*;
use mgrit_core::integrators::{
    FieldParams, ModelProblem, MotionParams, NewtonControls, NonlinearSaturationProblem, Reluctivity,
    SurrogateMachineProblem,
};
use mgrit_core::mgrit::{mgrit_solve, CycleType, RunOutcome, StoppingCriterion};
use mgrit_core::spatial::SpatialStrategy;
use mgrit_core::time_grid::{build_uniform_grid, TimeHierarchy};

#[test]
fn nested_iterations_start_closer() {
    let problem = linear(31, 3);
    let h = hierarchy(256, 2, 5);
    let mut opts = options(CycleType::F, 1, SpatialStrategy::Direct);
    opts.stopping = StoppingCriterion::residual(1e-8);
    let plain = mgrit_solve(&problem, &h, &opts, 2).unwrap().run;
    opts.cycle.nested_iterations = true;
    let nested = mgrit_solve(&problem, &h, &opts, 2).unwrap();
    assert!(nested.run.converged());
    assert!(nested.run.initial_residual < plain.initial_residual);
    assert!(nested.run.iterations <= plain.iterations);
    assert!(max_diff(nested.solution.as_ref().unwrap(), &oracle(&problem, &h)) < 1e-6);
}

#[test]
fn qoi_stopping_records_loss_changes() {
    let problem = nonlinear(15, 1);
    let h = hierarchy(128, 4, 3);
    let mut opts = options(CycleType::V, 1, SpatialStrategy::None);
    opts.stopping = StoppingCriterion::qoi(1e-6);
    let run = mgrit_solve(&problem, &h, &opts, 2).unwrap().run;
    assert!(run.converged());
    assert!(run.iterations >= 1);
    assert_eq!(run.qoi_history.len(), run.iterations);
    assert!(*run.qoi_history.last().unwrap() < 1e-6);
    assert!(run.qoi_history.iter().all(|q| q.is_finite()));
}

#[test]
fn newton_failure_ends_the_run_on_every_worker() {
    let params = FieldParams {
        n_x: 15,
        ..FieldParams::default()
    };
    let newton = NewtonControls {
        max_iters: 1,
        tolerance: 1e-15,
        damping: 0.5,
    };
    let problem = ModelProblem::Nonlinear(NonlinearSaturationProblem::new(params, Reluctivity::default(), newton).unwrap());
    let h = hierarchy(64, 2, 3);
    for p in [1, 3] {
        let out = mgrit_solve(&problem, &h, &options(CycleType::V, 1, SpatialStrategy::None), p).unwrap();
        match &out.run.outcome {
            RunOutcome::Failed(reason) => assert!(reason.contains("Newton"), "{reason}"),
            other => panic!("expected failure, got {other:?}"),
        }
        assert!(out.solution.is_none());
        assert!(!out.run.converged());
    }
}

#[test]
fn max_iterations_is_not_convergence() {
    let problem = linear(15, 1);
    let h = hierarchy(64, 2, 2);
    let mut opts = options(CycleType::TwoLevel, 0, SpatialStrategy::None);
    opts.cycle.max_iters = 2;
    opts.stopping = StoppingCriterion::residual(1e-14);
    let run = mgrit_solve(&problem, &h, &opts, 2).unwrap().run;
    assert_eq!(run.outcome, RunOutcome::MaxIterations);
    assert_eq!(run.iterations, 2);
    assert_eq!(run.residual_history.len(), 2);
}

#[test]
fn surrogate_with_spatial_coarsening_converges() {
    let params = FieldParams {
        n_x: 15,
        n_grids: 2,
        ..FieldParams::default()
    };
    let motion = MotionParams {
        omega0: 1.0,
        ..MotionParams::default()
    };
    let problem = ModelProblem::Surrogate(
        SurrogateMachineProblem::new(params, Reluctivity::default(), NewtonControls::default(), motion).unwrap(),
    );
    let h = hierarchy(128, 2, 4);
    let exact = oracle(&problem, &h);
    let mut opts = options(CycleType::F, 1, SpatialStrategy::Delayed);
    opts.stopping = StoppingCriterion::residual(1e-9);
    let out = mgrit_solve(&problem, &h, &opts, 2).unwrap();
    assert!(out.run.converged(), "{:?}", out.run.residual_history);
    let u = out.solution.unwrap();
    assert!(max_diff(&u, &exact) < 1e-7);
    assert_eq!(u.states[128].scalars.len(), 2);
}

#[test]
fn single_precision_solve() {
    let params = FieldParams {
        n_x: 15,
        ..FieldParams::default()
    };
    let problem = ModelProblem::<f32>::Linear(mgrit_core::integrators::LinearDiffusionProblem::new(params, 1.0).unwrap());
    let h = TimeHierarchy::new(build_uniform_grid(0.0f32, 0.02, 64).unwrap(), &[4], 2).unwrap();
    let mut opts = mgrit_core::MgritOptions::<f32>::default();
    opts.cycle.cycle_type = CycleType::TwoLevel;
    opts.stopping = StoppingCriterion::residual(1e-4);
    let out = mgrit_solve(&problem, &h, &opts, 2).unwrap();
    assert!(out.run.converged());
    let seq = mgrit_core::integrators::sequential_solve(&problem, &h.grids[0], Default::default()).unwrap();
    assert!(out.solution.unwrap().max_abs_diff(&seq).unwrap() < 1e-4);
}
