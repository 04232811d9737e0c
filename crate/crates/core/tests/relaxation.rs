use mgrit_core::excitation::Forcing;
use mgrit_core::integrators::{sequential_solve, Propagator, ScalarOde};
use mgrit_core::mgrit::{c_relaxation, f_relaxation, RelaxError};
use mgrit_core::state::{space_time_residual, BlockState, SpaceTimeVector};
use mgrit_core::time_grid::build_uniform_grid;
use proptest::prelude::*;

fn vector(vals: &[f64]) -> SpaceTimeVector<f64> {
    SpaceTimeVector::new(0, vals.iter().map(|&v| BlockState::new(vec![v], vec![], 0)).collect())
}

fn zeros(n: usize) -> SpaceTimeVector<f64> {
    vector(&vec![0.0; n])
}

proptest! {
    #[test]
    fn f_relaxation_zeroes_f_point_residuals(vals in prop::collection::vec(-2.0f64..2.0, 13), m in 2usize..5) {
        let ode = ScalarOde::new(-1.5, vals[0]);
        let grid = build_uniform_grid(0.0, 1.0, 12).unwrap();
        let phi = Propagator::new(&ode, &grid, 0, Forcing::Pwm);
        let mut u = vector(&vals);
        let g = zeros(13);
        f_relaxation(&phi, m, &mut u, &g).unwrap();
        let r = space_time_residual(&phi, &u, &g).unwrap();
        for i in 1..13 {
            if i % m != 0 {
                prop_assert!(r.states[i].field[0].abs() < 1e-14);
            }
            else {
                prop_assert_eq!(u.states[i].field[0], vals[i]);
            }
        }
        // idempotent
        let before = u.clone();
        f_relaxation(&phi, m, &mut u, &g).unwrap();
        prop_assert_eq!(before, u);
    }

    #[test]
    fn fcf_sweeps_propagate_exactness(vals in prop::collection::vec(-2.0f64..2.0, 13), m in 2usize..5) {
        let ode = ScalarOde::new(-1.5, 1.0);
        let grid = build_uniform_grid(0.0, 1.0, 12).unwrap();
        let phi = Propagator::new(&ode, &grid, 0, Forcing::Pwm);
        let exact = sequential_solve(&ode, &grid, Forcing::Pwm).unwrap();
        let mut u = vector(&vals);
        u.states[0] = exact.states[0].clone();
        let g = zeros(13);
        f_relaxation(&phi, m, &mut u, &g).unwrap();
        c_relaxation(&phi, m, &mut u, &g).unwrap();
        f_relaxation(&phi, m, &mut u, &g).unwrap();
        // F, C, F: exact through the F-points of the second interval
        for i in 0..(2 * m).min(13) {
            prop_assert!((u.states[i].field[0] - exact.states[i].field[0]).abs() < 1e-14);
        }
    }
}

#[test]
fn relaxation_checks_layout() {
    let ode = ScalarOde::new(-1.0, 1.0);
    let grid = build_uniform_grid(0.0, 1.0, 4).unwrap();
    let phi = Propagator::new(&ode, &grid, 0, Forcing::Pwm);
    let mut u = zeros(4);
    assert_eq!(f_relaxation(&phi, 2, &mut u, &zeros(5)), Err(RelaxError::Layout));
    let mut u = zeros(5);
    assert_eq!(c_relaxation(&phi, 1, &mut u, &zeros(5)), Err(RelaxError::Factor(1)));
}

#[test]
fn right_hand_side_enters_each_update() {
    let ode = ScalarOde::new(0.0, 0.0);
    let grid = build_uniform_grid(0.0, 1.0, 4).unwrap();
    let phi = Propagator::new(&ode, &grid, 0, Forcing::Pwm);
    let mut u = zeros(5);
    let g = vector(&[0.0, 1.0, 1.0, 1.0, 1.0]);
    f_relaxation(&phi, 2, &mut u, &g).unwrap();
    c_relaxation(&phi, 2, &mut u, &g).unwrap();
    let vals: Vec<f64> = u.states.iter().map(|s| s.field[0]).collect();
    assert_eq!(vals, vec![0.0, 1.0, 2.0, 1.0, 2.0]);
}
