//! 1D diffusion on the unit interval with homogeneous Dirichlet ends,
//! second-order central differences and backward Euler in time:
//!
//! `sigma (u - u_prev) / dt - d/dx (nu(|u_x|) u_x) = f(t)`.

use std::f64::consts::PI;

use super::tridiag::{FactorCache, TridiagLu};
use super::{StepError, StepOutcome, StepRequest, TimeIntegrator};
use crate::excitation::{Forcing, PwmSource};
use crate::scalar::Real;
use crate::spatial::{SpatialError, SpatialHierarchy};
use crate::state::BlockState;

/// Parameters shared by the field problems.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldParams {
    /// Interior points on the finest grid.
    pub n_x: usize,
    pub n_grids: usize,
    /// Weight of the time derivative. The default makes diffusion dominate a
    /// single fine step (`nu dt / (sigma h^2)` of about 8 at 31 points and
    /// 256 steps per period).
    pub sigma: f64,
    /// Source strength per unit phase voltage.
    pub amplitude: f64,
    /// Amplitude of the `sin(pi x)` initial field.
    pub initial_amplitude: f64,
    pub source: PwmSource,
}

impl Default for FieldParams {
    fn default() -> Self {
        Self {
            n_x: 31,
            n_grids: 1,
            sigma: 0.01,
            amplitude: 50.0,
            initial_amplitude: 0.0,
            source: PwmSource::default(),
        }
    }
}

/// Phase `s` drives the third `[(s-1)/3, s/3]` of the interval with a
/// `sin^2(3 pi x)` profile.
fn phase_shape(s: usize, x: f64) -> f64 {
    let lo = (s - 1) as f64 / 3.0;
    let hi = s as f64 / 3.0;
    let inside = x >= lo && (x < hi || (s == 3 && x <= hi));
    if inside {
        (3.0 * PI * x).sin().powi(2)
    } else {
        0.0
    }
}

/// Grid-dependent data common to the linear and nonlinear problems.
#[derive(Debug)]
pub(crate) struct FieldModel<T> {
    pub params: FieldParams,
    pub spatial: SpatialHierarchy,
    /// `shapes[grid][s]` for phases 1..=3.
    shapes: Vec<[Vec<T>; 3]>,
}

impl<T: Real> FieldModel<T> {
    pub fn new(params: FieldParams) -> Result<Self, SpatialError> {
        let spatial = SpatialHierarchy::new(params.n_x, params.n_grids)?;
        let shapes = (0..spatial.n_grids())
            .map(|g| {
                let nodes = spatial.nodes(g);
                [1, 2, 3].map(|s| nodes.iter().map(|&x| T::lit(phase_shape(s, x))).collect())
            })
            .collect();
        Ok(Self {
            params,
            spatial,
            shapes,
        })
    }

    pub fn h(&self, grid: usize) -> T {
        T::lit(self.spatial.h(grid))
    }

    pub fn sigma(&self) -> T {
        T::lit(self.params.sigma)
    }

    /// Source vector at time `t` on a grid.
    pub fn source(&self, grid: usize, t: T, forcing: Forcing) -> Vec<T> {
        let v = self.params.source.voltages(t, forcing);
        let amp = T::lit(self.params.amplitude);
        let shapes = &self.shapes[grid];
        (0..self.spatial.size(grid))
            .map(|j| amp * (v[0] * shapes[0][j] + v[1] * shapes[1][j] + v[2] * shapes[2][j]))
            .collect()
    }

    pub fn initial_field(&self) -> Vec<T> {
        let a = self.params.initial_amplitude;
        self.spatial
            .nodes(0)
            .into_iter()
            .map(|x| T::lit(a * (PI * x).sin()))
            .collect()
    }

    pub fn loss_weights(&self, grid: usize) -> Vec<T> {
        vec![T::lit(self.params.sigma * self.spatial.h(grid)); self.spatial.size(grid)]
    }
}

/// Linear diffusion `sigma u' + nu K u = f`.
#[derive(Debug)]
pub struct LinearDiffusionProblem<T> {
    model: FieldModel<T>,
    pub diffusivity: f64,
    cache: FactorCache<T>,
}

impl<T: Real> LinearDiffusionProblem<T> {
    pub fn new(params: FieldParams, diffusivity: f64) -> Result<Self, SpatialError> {
        Ok(Self {
            model: FieldModel::new(params)?,
            diffusivity,
            cache: FactorCache::new(),
        })
    }

    pub fn params(&self) -> &FieldParams {
        &self.model.params
    }

    /// Source vector at `t` on a grid.
    pub fn source(&self, grid: usize, t: T, forcing: Forcing) -> Vec<T> {
        self.model.source(grid, t, forcing)
    }

    /// Backward-Euler step with an explicit right-hand side `f`.
    pub fn step_with_source(&self, u_prev: &BlockState<T>, dt: T, f: &[T]) -> Result<BlockState<T>, StepError> {
        self.check_shape(u_prev)?;
        let grid = u_prev.grid;
        let n = u_prev.field.len();
        let s = self.model.sigma() / dt;
        let h = self.model.h(grid);
        let k = T::lit(self.diffusivity) / (h * h);
        let lu = self.cache.get_or_factor(grid, dt, || {
            let off = vec![-k; n];
            let diag = vec![s + T::lit(2.0) * k; n];
            TridiagLu::factor(&off, &diag, &off)
        })?;
        let mut rhs: Vec<T> = u_prev.field.iter().zip(f).map(|(&u, &fj)| s * u + fj).collect();
        lu.solve_in_place(&mut rhs);
        Ok(BlockState::new(rhs, u_prev.scalars.clone(), grid))
    }
}

impl<T: Real> TimeIntegrator<T> for LinearDiffusionProblem<T> {
    fn spatial(&self) -> &SpatialHierarchy {
        &self.model.spatial
    }

    fn n_scalars(&self) -> usize {
        0
    }

    fn initial_state(&self) -> BlockState<T> {
        BlockState::new(self.model.initial_field(), vec![], 0)
    }

    fn step(&self, req: StepRequest<'_, T>) -> Result<StepOutcome<T>, StepError> {
        let dt = req.dt()?;
        self.check_shape(req.u_prev)?;
        let f = self.model.source(req.u_prev.grid, req.t_next, req.forcing);
        self.step_with_source(req.u_prev, dt, &f).map(StepOutcome::direct)
    }

    fn loss_weights(&self, grid: usize) -> Vec<T> {
        self.model.loss_weights(grid)
    }
}

/// Saturation curve `nu(s) = k1 exp(k2 s^2) + k3`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Reluctivity {
    pub k1: f64,
    pub k2: f64,
    pub k3: f64,
}

impl Default for Reluctivity {
    fn default() -> Self {
        Self {
            k1: 0.05,
            k2: 2.0,
            k3: 1.0,
        }
    }
}

impl Reluctivity {
    pub fn nu<T: Real>(&self, s: T) -> T {
        T::lit(self.k1) * (T::lit(self.k2) * s * s).exp() + T::lit(self.k3)
    }

    /// Flux `q(s) = nu(s) s` and its derivative `dq/ds`.
    pub fn flux<T: Real>(&self, s: T) -> (T, T) {
        let (k1, k2, k3) = (T::lit(self.k1), T::lit(self.k2), T::lit(self.k3));
        let e = (k2 * s * s).exp();
        let nu = k1 * e + k3;
        let dq = nu + T::lit(2.0) * k1 * k2 * s * s * e;
        (nu * s, dq)
    }

    pub fn is_valid(&self) -> bool {
        self.k1 >= 0.0 && self.k3 >= 0.0 && (self.k1 > 0.0 || self.k3 > 0.0) && self.k2 >= 0.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NewtonControls {
    pub max_iters: usize,
    /// Bound on the max-norm of the residual scaled to state units,
    /// relative to `max(1, |u|_inf)`.
    pub tolerance: f64,
    /// First damping factor tried when a full step does not reduce the residual.
    pub damping: f64,
}

impl Default for NewtonControls {
    fn default() -> Self {
        Self {
            max_iters: 25,
            tolerance: 1e-11,
            damping: 0.5,
        }
    }
}

const MAX_HALVINGS: usize = 8;

/// Nonlinear diffusion with a saturating reluctivity, solved per step with
/// damped Newton.
#[derive(Debug)]
pub struct NonlinearSaturationProblem<T> {
    model: FieldModel<T>,
    pub curve: Reluctivity,
    pub newton: NewtonControls,
}

impl<T: Real> NonlinearSaturationProblem<T> {
    pub fn new(params: FieldParams, curve: Reluctivity, newton: NewtonControls) -> Result<Self, SpatialError> {
        Ok(Self {
            model: FieldModel::new(params)?,
            curve,
            newton,
        })
    }

    pub fn params(&self) -> &FieldParams {
        &self.model.params
    }

    pub fn source(&self, grid: usize, t: T, forcing: Forcing) -> Vec<T> {
        self.model.source(grid, t, forcing)
    }

    pub(crate) fn model(&self) -> &FieldModel<T> {
        &self.model
    }

    /// Backward-Euler residual scaled by `dt / sigma`:
    /// `(u - u_prev) - dt/sigma (div q(u_x) + f)`.
    pub fn residual(&self, u: &[T], u_prev: &[T], dt: T, f: &[T], grid: usize) -> Vec<T> {
        let n = u.len();
        let h = self.model.h(grid);
        let c = dt / self.model.sigma();
        let at = |j: isize| {
            if j < 0 || j as usize >= n {
                T::zero()
            } else {
                u[j as usize]
            }
        };
        // flux on the n + 1 faces; face k sits between nodes k-1 and k
        let q: Vec<T> = (0..=n as isize)
            .map(|k| self.curve.flux((at(k) - at(k - 1)) / h).0)
            .collect();
        (0..n)
            .map(|j| (u[j] - u_prev[j]) - c * ((q[j + 1] - q[j]) / h + f[j]))
            .collect()
    }

    /// Tridiagonal Jacobian of [`Self::residual`] as (lower, diag, upper).
    pub fn jacobian(&self, u: &[T], dt: T, grid: usize) -> (Vec<T>, Vec<T>, Vec<T>) {
        let n = u.len();
        let h = self.model.h(grid);
        let c = dt / (self.model.sigma() * h * h);
        let at = |j: isize| {
            if j < 0 || j as usize >= n {
                T::zero()
            } else {
                u[j as usize]
            }
        };
        let d: Vec<T> = (0..=n as isize)
            .map(|k| self.curve.flux((at(k) - at(k - 1)) / h).1)
            .collect();
        let lower = (0..n).map(|j| -c * d[j]).collect();
        let diag = (0..n).map(|j| T::one() + c * (d[j] + d[j + 1])).collect();
        let upper = (0..n).map(|j| -c * d[j + 1]).collect();
        (lower, diag, upper)
    }

    /// Damped Newton for one step; returns the field and the update count.
    pub(crate) fn solve_field(
        &self,
        u_prev: &[T],
        guess: &[T],
        dt: T,
        f: &[T],
        grid: usize,
    ) -> Result<(Vec<T>, usize), StepError> {
        let norm = |v: &[T]| v.iter().fold(T::zero(), |m, x| m.max(x.abs()));
        let tol = T::lit(self.newton.tolerance);
        let mut u = guess.to_vec();
        let mut r = self.residual(&u, u_prev, dt, f, grid);
        let mut rn = norm(&r);
        let mut iterations = 0;
        loop {
            if rn <= tol * norm(&u).max(T::one()) {
                return Ok((u, iterations));
            }
            if iterations == self.newton.max_iters || !rn.is_finite() {
                return Err(StepError::NewtonNoConvergence {
                    iterations,
                    residual: rn.as_f64(),
                });
            }
            let (lo, di, up) = self.jacobian(&u, dt, grid);
            let mut delta: Vec<T> = r.iter().map(|&v| -v).collect();
            TridiagLu::factor(&lo, &di, &up)?.solve_in_place(&mut delta);

            let mut lambda = T::one();
            let mut halvings = 0;
            loop {
                let trial: Vec<T> = u.iter().zip(&delta).map(|(&a, &d)| a + lambda * d).collect();
                let tr = self.residual(&trial, u_prev, dt, f, grid);
                let tn = norm(&tr);
                if tn < rn || halvings == MAX_HALVINGS {
                    u = trial;
                    r = tr;
                    rn = tn;
                    break;
                }
                lambda = if halvings == 0 {
                    T::lit(self.newton.damping)
                } else {
                    lambda * T::lit(0.5)
                };
                halvings += 1;
            }
            iterations += 1;
        }
    }

    fn step_field(&self, req: &StepRequest<'_, T>) -> Result<(BlockState<T>, usize), StepError> {
        let dt = req.dt()?;
        let prev = req.u_prev;
        let grid = prev.grid;
        let guess = match req.initial_guess {
            Some(g) if g.grid == grid && g.field.len() == prev.field.len() => &g.field,
            _ => &prev.field,
        };
        let f = self.model.source(grid, req.t_next, req.forcing);
        let (field, iterations) = self.solve_field(&prev.field, guess, dt, &f, grid)?;
        Ok((BlockState::new(field, prev.scalars.clone(), grid), iterations))
    }
}

impl<T: Real> TimeIntegrator<T> for NonlinearSaturationProblem<T> {
    fn spatial(&self) -> &SpatialHierarchy {
        &self.model.spatial
    }

    fn n_scalars(&self) -> usize {
        0
    }

    fn initial_state(&self) -> BlockState<T> {
        BlockState::new(self.model.initial_field(), vec![], 0)
    }

    fn step(&self, req: StepRequest<'_, T>) -> Result<StepOutcome<T>, StepError> {
        self.check_shape(req.u_prev)?;
        let (state, newton_iterations) = self.step_field(&req)?;
        Ok(StepOutcome {
            state,
            newton_iterations,
            converged: true,
        })
    }

    fn loss_weights(&self, grid: usize) -> Vec<T> {
        self.model.loss_weights(grid)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn phase_shapes_cover_thirds() {
        assert_eq!(phase_shape(1, 0.5), 0.0);
        assert!(phase_shape(2, 0.5) > 0.99);
        assert!(phase_shape(1, 1.0 / 6.0) > 0.99);
        assert!(phase_shape(3, 1.0) < 1e-20);
    }

    #[test]
    fn flux_derivative_matches_difference_quotient() {
        let c = Reluctivity::default();
        for s in [-1.3f64, -0.2, 0.0, 0.4, 1.1] {
            let eps = 1e-6;
            let fd = (c.flux(s + eps).0 - c.flux(s - eps).0) / (2.0 * eps);
            assert!((fd - c.flux(s).1).abs() < 1e-6 * fd.abs().max(1.0));
        }
        assert!(c.nu(0.0f64) > 1.0);
    }
}
