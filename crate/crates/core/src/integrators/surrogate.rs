//! Field problem coupled one way to a rigid rotor: the field step comes
//! first, its torque then drives `I theta'' + C theta' = T_mag`.

use std::f64::consts::PI;

use super::diffusion::{FieldParams, NewtonControls, NonlinearSaturationProblem, Reluctivity};
use super::{StepError, StepOutcome, StepRequest, TimeIntegrator};
use crate::scalar::Real;
use crate::spatial::{SpatialError, SpatialHierarchy};
use crate::state::BlockState;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MotionParams {
    /// Moment of inertia in kg m^2.
    pub inertia: f64,
    /// Friction coefficient in N m s.
    pub friction: f64,
    /// Scale of the coupling profile `sin(2 pi x)`.
    pub torque_gain: f64,
    pub theta0: f64,
    pub omega0: f64,
}

impl Default for MotionParams {
    fn default() -> Self {
        Self {
            inertia: 0.01,
            friction: 0.1,
            torque_gain: 1.0,
            theta0: 0.0,
            omega0: 0.0,
        }
    }
}

/// Scalars are `[theta, omega]`.
#[derive(Debug)]
pub struct SurrogateMachineProblem<T> {
    field: NonlinearSaturationProblem<T>,
    pub motion: MotionParams,
    coupling: Vec<Vec<T>>,
}

impl<T: Real> SurrogateMachineProblem<T> {
    pub fn new(
        params: FieldParams,
        curve: Reluctivity,
        newton: NewtonControls,
        motion: MotionParams,
    ) -> Result<Self, SpatialError> {
        let field = NonlinearSaturationProblem::new(params, curve, newton)?;
        let spatial = field.spatial();
        let coupling = (0..spatial.n_grids())
            .map(|g| {
                let h = spatial.h(g);
                spatial
                    .nodes(g)
                    .into_iter()
                    .map(|x| T::lit(motion.torque_gain * h * (2.0 * PI * x).sin()))
                    .collect()
            })
            .collect();
        Ok(Self {
            field,
            motion,
            coupling,
        })
    }

    pub fn field_problem(&self) -> &NonlinearSaturationProblem<T> {
        &self.field
    }

    /// Torque `h sum_j c(x_j) u_j` of a field on a grid.
    pub fn torque(&self, field: &[T], grid: usize) -> T {
        self.coupling[grid].iter().zip(field).map(|(&c, &u)| c * u).sum()
    }

    /// Backward-Euler update of `[theta, omega]` under a given torque.
    pub fn motion_step(&self, scalars: &[T], torque: T, dt: T) -> Vec<T> {
        let inertia = T::lit(self.motion.inertia);
        let friction = T::lit(self.motion.friction);
        let omega = (scalars[1] + dt * torque / inertia) / (T::one() + dt * friction / inertia);
        vec![scalars[0] + dt * omega, omega]
    }
}

impl<T: Real> TimeIntegrator<T> for SurrogateMachineProblem<T> {
    fn spatial(&self) -> &SpatialHierarchy {
        self.field.spatial()
    }

    fn n_scalars(&self) -> usize {
        2
    }

    fn initial_state(&self) -> BlockState<T> {
        let mut s = self.field.initial_state();
        s.scalars = vec![T::lit(self.motion.theta0), T::lit(self.motion.omega0)];
        s
    }

    fn step(&self, req: StepRequest<'_, T>) -> Result<StepOutcome<T>, StepError> {
        let dt = req.dt()?;
        self.check_shape(req.u_prev)?;
        let prev = req.u_prev;
        let grid = prev.grid;
        let guess = match req.initial_guess {
            Some(g) if g.grid == grid && g.field.len() == prev.field.len() => &g.field,
            _ => &prev.field,
        };
        let f = self.field.model().source(grid, req.t_next, req.forcing);
        let (field, newton_iterations) = self.field.solve_field(&prev.field, guess, dt, &f, grid)?;
        let torque = self.torque(&field, grid);
        let scalars = self.motion_step(&prev.scalars, torque, dt);
        Ok(StepOutcome {
            state: BlockState::new(field, scalars, grid),
            newton_iterations,
            converged: true,
        })
    }

    fn loss_weights(&self, grid: usize) -> Vec<T> {
        self.field.loss_weights(grid)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn problem(friction: f64) -> SurrogateMachineProblem<f64> {
        let motion = MotionParams {
            friction,
            ..MotionParams::default()
        };
        SurrogateMachineProblem::new(
            FieldParams {
                n_x: 7,
                ..FieldParams::default()
            },
            Reluctivity::default(),
            NewtonControls::default(),
            motion,
        )
        .unwrap()
    }

    #[test]
    fn zero_torque_keeps_rotor_at_rest() {
        let p = problem(0.1);
        assert_eq!(p.motion_step(&[0.3, 0.0], 0.0, 1e-3), vec![0.3, 0.0]);
    }

    #[test]
    fn constant_torque_without_friction_integrates_linearly() {
        let p = problem(0.0);
        let (dt, tau) = (1e-3, 2.0);
        let mut s = vec![0.0, 0.0];
        for k in 1..=5 {
            s = p.motion_step(&s, tau, dt);
            let expect = k as f64 * dt * tau / p.motion.inertia;
            assert!((s[1] - expect).abs() < 1e-12);
        }
    }
}
