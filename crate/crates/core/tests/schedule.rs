//! Every small layout of levels, factors and workers runs to completion and
//! reproduces the sequential solution.

mod common;

use common::*;
use mgrit_core::mgrit::{mgrit_solve, CycleType};
use mgrit_core::spatial::SpatialStrategy;

#[test]
fn small_layouts_finish() {
    let problem = mgrit_core::integrators::ModelProblem::Scalar(mgrit_core::integrators::ScalarOde::new(-3.0, 1.0));
    for n_t in [12, 17, 32] {
        for m in [2, 3, 4] {
            for levels in 2..=4 {
                let h = match mgrit_core::time_grid::TimeHierarchy::new(
                    mgrit_core::time_grid::build_uniform_grid(0.0, 1.0, n_t).unwrap(),
                    &vec![m; levels - 1],
                    2,
                ) {
                    Ok(h) => h,
                    Err(_) => continue,
                };
                let exact = oracle(&problem, &h);
                for ct in [CycleType::V, CycleType::F] {
                    for p in 1..=n_t.div_ceil(m).min(6) {
                        let out = mgrit_solve(&problem, &h, &options(ct, 1, SpatialStrategy::None), p).unwrap();
                        assert!(out.run.converged(), "n_t={n_t} m={m} L={levels} p={p}");
                        assert!(max_diff(out.solution.as_ref().unwrap(), &exact) < 1e-9);
                    }
                }
            }
        }
    }
}

#[test]
fn single_level_is_a_sequential_solve() {
    let problem = linear(7, 1);
    let h = hierarchy(20, 4, 1);
    let exact = oracle(&problem, &h);
    for p in [1, 3] {
        let out = mgrit_solve(&problem, &h, &options(CycleType::V, 1, SpatialStrategy::None), p).unwrap();
        assert_eq!(out.run.iterations, 1);
        assert!(out.run.converged());
        assert!(max_diff(out.solution.as_ref().unwrap(), &exact) < 1e-12);
    }
}

#[test]
fn two_level_needs_a_coarse_grid() {
    let problem = linear(7, 1);
    let h = hierarchy(20, 4, 1);
    let err = mgrit_solve(&problem, &h, &options(CycleType::TwoLevel, 1, SpatialStrategy::None), 1);
    assert!(err.is_err());
}
