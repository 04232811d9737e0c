//! Time steppers against independently assembled dense systems.

use approx::assert_relative_eq;
use mgrit_core::excitation::Forcing;
use mgrit_core::integrators::{
    FieldParams, LinearDiffusionProblem, MotionParams, NewtonControls, NonlinearSaturationProblem, Reluctivity,
    StepRequest, SurrogateMachineProblem, TimeIntegrator,
};
use mgrit_core::state::BlockState;
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

fn params(n_x: usize, sigma: f64) -> FieldParams {
    FieldParams {
        n_x,
        sigma,
        ..FieldParams::default()
    }
}

/// `sigma/dt I + nu/h^2 tridiag(-1, 2, -1)`.
fn dense_operator(n: usize, sigma: f64, nu: f64, dt: f64) -> DMatrix<f64> {
    let h = 1.0 / (n + 1) as f64;
    let k = nu / (h * h);
    DMatrix::from_fn(n, n, |i, j| match i.abs_diff(j) {
        0 => sigma / dt + 2.0 * k,
        1 => -k,
        _ => 0.0,
    })
}

fn sine_mode(n: usize, k: f64) -> Vec<f64> {
    (1..=n).map(|j| (k * std::f64::consts::PI * j as f64 / (n + 1) as f64).sin()).collect()
}

#[test]
fn linear_step_matches_dense_solve() {
    let (n, dt) = (7, 0.1);
    let p = LinearDiffusionProblem::<f64>::new(params(n, 1.0), 1.0).unwrap();
    let u_prev = sine_mode(n, 2.0);
    let f: Vec<f64> = (0..n).map(|j| 0.3 * j as f64 - 1.0).collect();
    let got = p.step_with_source(&BlockState::new(u_prev.clone(), vec![], 0), dt, &f).unwrap();
    let rhs = DVector::from_iterator(n, u_prev.iter().zip(&f).map(|(u, f)| u / dt + f));
    let want = dense_operator(n, 1.0, 1.0, dt).lu().solve(&rhs).unwrap();
    for j in 0..n {
        assert_relative_eq!(got.field[j], want[j], max_relative = 1e-12);
    }
}

#[test]
fn linear_step_of_zero_is_zero() {
    let p = LinearDiffusionProblem::<f64>::new(params(7, 1.0), 1.0).unwrap();
    let out = p.step_with_source(&BlockState::zeros(0, 7, 0), 0.1, &[0.0; 7]).unwrap();
    assert!(out.field.iter().all(|&v| v == 0.0));
}

proptest! {
    #[test]
    fn linear_step_is_affine(
        a in -3.0f64..3.0,
        b in -3.0f64..3.0,
        u1 in prop::collection::vec(-1.0f64..1.0, 7),
        u2 in prop::collection::vec(-1.0f64..1.0, 7),
        f1 in prop::collection::vec(-10.0f64..10.0, 7),
        f2 in prop::collection::vec(-10.0f64..10.0, 7),
    ) {
        let p = LinearDiffusionProblem::<f64>::new(params(7, 1.0), 1.0).unwrap();
        let dt = 0.05;
        let comb = |x: &[f64], y: &[f64]| x.iter().zip(y).map(|(x, y)| a * x + b * y).collect::<Vec<_>>();
        let lhs = p.step_with_source(&BlockState::new(comb(&u1, &u2), vec![], 0), dt, &comb(&f1, &f2)).unwrap();
        let s1 = p.step_with_source(&BlockState::new(u1.clone(), vec![], 0), dt, &f1).unwrap();
        let s2 = p.step_with_source(&BlockState::new(u2.clone(), vec![], 0), dt, &f2).unwrap();
        let rhs = comb(&s1.field, &s2.field);
        for j in 0..7 {
            prop_assert!((lhs.field[j] - rhs[j]).abs() <= 1e-12 * (1.0 + rhs[j].abs()));
        }
    }

    #[test]
    fn jacobian_matches_finite_differences(u in prop::collection::vec(-0.05f64..0.05, 15), dt in 1e-4f64..1e-2) {
        let p = NonlinearSaturationProblem::<f64>::new(params(15, 1.0), Reluctivity::default(), NewtonControls::default()).unwrap();
        let zeros = vec![0.0; 15];
        let (lo, di, up) = p.jacobian(&u, dt, 0);
        let eps = 1e-6;
        for k in 0..15 {
            let mut plus = u.clone();
            let mut minus = u.clone();
            plus[k] += eps;
            minus[k] -= eps;
            let rp = p.residual(&plus, &zeros, dt, &zeros, 0);
            let rm = p.residual(&minus, &zeros, dt, &zeros, 0);
            for j in 0..15 {
                let fd = (rp[j] - rm[j]) / (2.0 * eps);
                let exact = match j as isize - k as isize {
                    0 => di[j],
                    1 => lo[j],
                    -1 => up[j],
                    _ => 0.0,
                };
                prop_assert!((fd - exact).abs() <= 1e-5 * exact.abs().max(1.0), "({j},{k}) {fd} vs {exact}");
            }
        }
    }
}

fn nonlinear_step(p: &NonlinearSaturationProblem<f64>, prev: &BlockState<f64>, t0: f64, t1: f64) -> (BlockState<f64>, usize) {
    let out = p.step(StepRequest::new(prev, t0, t1)).unwrap();
    (out.state, out.newton_iterations)
}

#[test]
fn constant_curve_reduces_to_linear_step() {
    let curve = Reluctivity {
        k1: 0.05,
        k2: 0.0,
        k3: 1.0,
    };
    let nl = NonlinearSaturationProblem::<f64>::new(params(15, 0.01), curve, NewtonControls::default()).unwrap();
    let lin = LinearDiffusionProblem::<f64>::new(params(15, 0.01), 1.05).unwrap();
    let prev = BlockState::new(sine_mode(15, 1.0), vec![], 0);
    let (got, iterations) = nonlinear_step(&nl, &prev, 0.004, 0.005);
    let want = lin.step(StepRequest::new(&prev, 0.004, 0.005)).unwrap().state;
    assert_eq!(iterations, 1);
    for j in 0..15 {
        assert_relative_eq!(got.field[j], want.field[j], epsilon = 1e-12, max_relative = 1e-10);
    }
}

#[test]
fn resting_field_without_forcing_stays_at_rest() {
    let mut prm = params(7, 1.0);
    prm.amplitude = 0.0;
    let p = NonlinearSaturationProblem::<f64>::new(prm, Reluctivity::default(), NewtonControls::default()).unwrap();
    let (u, iterations) = nonlinear_step(&p, &BlockState::zeros(0, 7, 0), 0.0, 0.01);
    assert!(iterations <= 1);
    assert!(u.field.iter().all(|&v| v == 0.0));
}

#[test]
fn newton_step_solves_its_residual() {
    let p = NonlinearSaturationProblem::<f64>::new(params(15, 0.01), Reluctivity::default(), NewtonControls::default()).unwrap();
    let prev = BlockState::new(sine_mode(15, 1.0).iter().map(|v| 0.3 * v).collect(), vec![], 0);
    let (t0, t1) = (0.0101, 0.0102);
    let (u, _) = nonlinear_step(&p, &prev, t0, t1);
    let f = p.source(0, t1, Forcing::Pwm);
    let r = p.residual(&u.field, &prev.field, t1 - t0, &f, 0);
    let scale = u.max_abs().max(1.0);
    assert!(r.iter().all(|v| v.abs() <= 1e-11 * scale));
}

/// Frozen-coefficient iteration on the same discrete equations.
fn picard(p: &NonlinearSaturationProblem<f64>, curve: Reluctivity, u_prev: &[f64], dt: f64, f: &[f64], sigma: f64) -> Vec<f64> {
    let n = u_prev.len();
    let h = 1.0 / (n + 1) as f64;
    let c = dt / (sigma * h * h);
    let mut u = u_prev.to_vec();
    for _ in 0..500 {
        let at = |u: &[f64], j: isize| if j < 0 || j as usize >= n { 0.0 } else { u[j as usize] };
        let nu: Vec<f64> = (0..=n as isize).map(|k| curve.nu(((at(&u, k) - at(&u, k - 1)) / h).abs())).collect();
        let a = DMatrix::from_fn(n, n, |i, j| {
            if i == j {
                1.0 + c * (nu[i] + nu[i + 1])
            } else if j + 1 == i {
                -c * nu[i]
            } else if i + 1 == j {
                -c * nu[i + 1]
            } else {
                0.0
            }
        });
        let rhs = DVector::from_iterator(n, (0..n).map(|j| u_prev[j] + dt / sigma * f[j]));
        let next = a.lu().solve(&rhs).unwrap();
        let change = next.iter().zip(&u).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        u = next.iter().copied().collect();
        if change < 1e-14 {
            break;
        }
    }
    let r = p.residual(&u, u_prev, dt, f, 0);
    assert!(r.iter().all(|v| v.abs() < 1e-12), "picard did not settle");
    u
}

#[test]
fn newton_matches_picard_iteration() {
    let curve = Reluctivity::default();
    let sigma = 1.0;
    let p = NonlinearSaturationProblem::<f64>::new(params(7, sigma), curve, NewtonControls::default()).unwrap();
    let prev: Vec<f64> = sine_mode(7, 1.0).iter().map(|v| 0.2 * v).collect();
    let (t0, t1) = (0.003, 0.004);
    let f = p.source(0, t1, Forcing::Pwm);
    let want = picard(&p, curve, &prev, t1 - t0, &f, sigma);
    let (got, _) = nonlinear_step(&p, &BlockState::new(prev, vec![], 0), t0, t1);
    for j in 0..7 {
        assert!((got.field[j] - want[j]).abs() <= 1e-12, "{} vs {}", got.field[j], want[j]);
    }
}

#[test]
fn surrogate_matches_monolithic_newton() {
    let motion = MotionParams {
        theta0: 0.1,
        omega0: -0.5,
        ..MotionParams::default()
    };
    let (n, sigma) = (7, 0.01);
    let p = SurrogateMachineProblem::<f64>::new(params(n, sigma), Reluctivity::default(), NewtonControls::default(), motion)
        .unwrap();
    let mut prev = p.initial_state();
    prev.field = sine_mode(n, 1.0).iter().map(|v| 0.2 * v).collect();
    let (t0, t1) = (0.0061, 0.0062);
    let dt = t1 - t0;
    let got = p.step(StepRequest::new(&prev, t0, t1)).unwrap().state;

    let field = p.field_problem();
    let f = field.source(0, t1, Forcing::Pwm);
    let h = 1.0 / (n + 1) as f64;
    let coupling: Vec<f64> = (1..=n)
        .map(|j| motion.torque_gain * h * (2.0 * std::f64::consts::PI * j as f64 * h).sin())
        .collect();
    let (inertia, friction) = (motion.inertia, motion.friction);
    let residual = |x: &DVector<f64>| {
        let u: Vec<f64> = x.rows(0, n).iter().copied().collect();
        let (theta, omega) = (x[n], x[n + 1]);
        let torque: f64 = coupling.iter().zip(&u).map(|(c, u)| c * u).sum();
        let mut r = field.residual(&u, &prev.field, dt, &f, 0);
        r.push(theta - prev.scalars[0] - dt * omega);
        r.push(omega - prev.scalars[1] - dt * (torque - friction * omega) / inertia);
        DVector::from_vec(r)
    };
    let mut x = DVector::from_iterator(n + 2, prev.field.iter().chain(&prev.scalars).copied());
    for _ in 0..50 {
        let r = residual(&x);
        if r.amax() < 1e-14 {
            break;
        }
        let mut jac = DMatrix::zeros(n + 2, n + 2);
        for k in 0..n + 2 {
            let eps = 1e-7;
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[k] += eps;
            xm[k] -= eps;
            jac.set_column(k, &((residual(&xp) - residual(&xm)) / (2.0 * eps)));
        }
        x -= jac.lu().solve(&r).unwrap();
    }
    for j in 0..n {
        assert!((got.field[j] - x[j]).abs() < 1e-8);
    }
    assert!((got.scalars[0] - x[n]).abs() < 1e-8);
    assert!((got.scalars[1] - x[n + 1]).abs() < 1e-8);
}

#[test]
fn single_precision_step_tracks_double() {
    let p64 = LinearDiffusionProblem::<f64>::new(params(15, 0.01), 1.0).unwrap();
    let p32 = LinearDiffusionProblem::<f32>::new(params(15, 0.01), 1.0).unwrap();
    let a = p64.step(StepRequest::new(&p64.initial_state(), 0.0, 0.001)).unwrap().state;
    let b = p32.step(StepRequest::new(&p32.initial_state(), 0.0, 0.001)).unwrap().state;
    for j in 0..15 {
        assert!((a.field[j] - b.field[j] as f64).abs() < 1e-5 * (1.0 + a.field[j].abs()));
    }
}
