//! The one-step map `Phi` and the built-in backward-Euler model problems.

mod diffusion;
mod scalar_ode;
mod surrogate;
pub mod tridiag;

use thiserror::Error;

pub use crate::excitation::Forcing;
pub use diffusion::{
    FieldParams, LinearDiffusionProblem, NewtonControls, NonlinearSaturationProblem, Reluctivity,
};
pub use scalar_ode::ScalarOde;
pub use surrogate::{MotionParams, SurrogateMachineProblem};

use crate::excitation::ExcitationError;
use crate::scalar::Real;
use crate::spatial::SpatialHierarchy;
use crate::state::{BlockState, SpaceTimeVector};
use crate::time_grid::TimeGrid;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StepError {
    #[error("time step requires t_next > t_prev (got {t_prev} -> {t_next})")]
    InvalidInterval { t_prev: f64, t_next: f64 },
    #[error("state on grid {grid} has {got} field and {got_scalars} scalar entries, expected {expected} and {expected_scalars}")]
    Shape {
        grid: usize,
        got: usize,
        expected: usize,
        got_scalars: usize,
        expected_scalars: usize,
    },
    #[error("state lives on spatial grid {got}, propagator expects grid {expected}")]
    WrongGrid { got: usize, expected: usize },
    #[error("singular tridiagonal system at row {row}")]
    Singular { row: usize },
    #[error("Newton did not converge after {iterations} iterations (residual {residual:e})")]
    NewtonNoConvergence { iterations: usize, residual: f64 },
    #[error(transparent)]
    Excitation(#[from] ExcitationError),
}

/// Input of one implicit step.
#[derive(Debug, Clone, Copy)]
pub struct StepRequest<'a, T> {
    pub u_prev: &'a BlockState<T>,
    pub t_prev: T,
    pub t_next: T,
    /// Starting iterate for nonlinear solves; `u_prev` when absent.
    pub initial_guess: Option<&'a BlockState<T>>,
    pub forcing: Forcing,
}

impl<'a, T: Real> StepRequest<'a, T> {
    pub fn new(u_prev: &'a BlockState<T>, t_prev: T, t_next: T) -> Self {
        Self {
            u_prev,
            t_prev,
            t_next,
            initial_guess: None,
            forcing: Forcing::Pwm,
        }
    }

    pub fn with_forcing(mut self, forcing: Forcing) -> Self {
        self.forcing = forcing;
        self
    }

    pub fn with_guess(mut self, guess: &'a BlockState<T>) -> Self {
        self.initial_guess = Some(guess);
        self
    }

    pub fn dt(&self) -> Result<T, StepError> {
        let dt = self.t_next - self.t_prev;
        if dt > T::zero() {
            Ok(dt)
        } else {
            Err(StepError::InvalidInterval {
                t_prev: self.t_prev.as_f64(),
                t_next: self.t_next.as_f64(),
            })
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome<T> {
    pub state: BlockState<T>,
    /// Newton updates performed; zero for direct linear solves.
    pub newton_iterations: usize,
    pub converged: bool,
}

impl<T> StepOutcome<T> {
    pub fn direct(state: BlockState<T>) -> Self {
        Self {
            state,
            newton_iterations: 0,
            converged: true,
        }
    }
}

/// One implicit time step on a given spatial grid. Implementations must be
/// deterministic and depend only on the request.
pub trait TimeIntegrator<T: Real>: Send + Sync {
    fn spatial(&self) -> &SpatialHierarchy;

    fn n_scalars(&self) -> usize;

    /// Initial condition on the finest spatial grid.
    fn initial_state(&self) -> BlockState<T>;

    fn step(&self, req: StepRequest<'_, T>) -> Result<StepOutcome<T>, StepError>;

    /// Quadrature weights `sigma * h` of the loss functional on a grid.
    fn loss_weights(&self, grid: usize) -> Vec<T>;

    fn check_shape(&self, x: &BlockState<T>) -> Result<(), StepError> {
        let expected = self.spatial().sizes().get(x.grid).copied().unwrap_or(0);
        if x.field.len() != expected || x.scalars.len() != self.n_scalars() {
            return Err(StepError::Shape {
                grid: x.grid,
                got: x.field.len(),
                expected,
                got_scalars: x.scalars.len(),
                expected_scalars: self.n_scalars(),
            });
        }
        Ok(())
    }
}

/// `Phi_i` of one time level: steps from `t_{i-1}` to `t_i` of `grid` on a
/// fixed spatial grid with a fixed forcing.
pub struct Propagator<'a, T, I: ?Sized> {
    integrator: &'a I,
    grid: &'a TimeGrid<T>,
    spatial_grid: usize,
    forcing: Forcing,
}

impl<'a, T: Real, I: TimeIntegrator<T> + ?Sized> Propagator<'a, T, I> {
    pub fn new(integrator: &'a I, grid: &'a TimeGrid<T>, spatial_grid: usize, forcing: Forcing) -> Self {
        Self {
            integrator,
            grid,
            spatial_grid,
            forcing,
        }
    }

    pub fn time_grid(&self) -> &TimeGrid<T> {
        self.grid
    }

    pub fn spatial_grid(&self) -> usize {
        self.spatial_grid
    }

    pub fn apply(&self, i: usize, prev: &BlockState<T>) -> Result<StepOutcome<T>, StepError> {
        if prev.grid != self.spatial_grid {
            return Err(StepError::WrongGrid {
                got: prev.grid,
                expected: self.spatial_grid,
            });
        }
        let req = StepRequest::new(prev, self.grid.points[i - 1], self.grid.points[i])
            .with_forcing(self.forcing);
        self.integrator.step(req)
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
#[error("sequential solve failed at step {index}: {source}")]
pub struct SequentialError {
    pub index: usize,
    #[source]
    pub source: StepError,
}

/// Ordinary time stepping over the whole grid on the finest spatial grid.
pub fn sequential_solve<T: Real, I: TimeIntegrator<T> + ?Sized>(
    integrator: &I,
    grid: &TimeGrid<T>,
    forcing: Forcing,
) -> Result<SpaceTimeVector<T>, SequentialError> {
    let phi = Propagator::new(integrator, grid, 0, forcing);
    let mut states = Vec::with_capacity(grid.len());
    states.push(integrator.initial_state());
    for i in 1..grid.len() {
        let next = phi
            .apply(i, &states[i - 1])
            .map_err(|source| SequentialError { index: i, source })?;
        states.push(next.state);
    }
    Ok(SpaceTimeVector::new(0, states))
}

/// Discrete Joule loss `sum_j w_j ((u_next - u_prev)_j / dt)^2` over the field.
pub fn joule_loss<T: Real>(u_prev: &BlockState<T>, u_next: &BlockState<T>, dt: T, weights: &[T]) -> T {
    u_prev
        .field
        .iter()
        .zip(&u_next.field)
        .zip(weights)
        .map(|((&a, &b), &w)| {
            let rate = (b - a) / dt;
            w * rate * rate
        })
        .sum()
}

/// Built-in problems behind one type, for configuration-driven runs.
#[derive(Debug)]
pub enum ModelProblem<T: Real> {
    Linear(LinearDiffusionProblem<T>),
    Nonlinear(NonlinearSaturationProblem<T>),
    Surrogate(SurrogateMachineProblem<T>),
    Scalar(ScalarOde<T>),
}

macro_rules! delegate {
    ($self:ident, $p:ident => $e:expr) => {
        match $self {
            ModelProblem::Linear($p) => $e,
            ModelProblem::Nonlinear($p) => $e,
            ModelProblem::Surrogate($p) => $e,
            ModelProblem::Scalar($p) => $e,
        }
    };
}

impl<T: Real> TimeIntegrator<T> for ModelProblem<T> {
    fn spatial(&self) -> &SpatialHierarchy {
        delegate!(self, p => p.spatial())
    }

    fn n_scalars(&self) -> usize {
        delegate!(self, p => p.n_scalars())
    }

    fn initial_state(&self) -> BlockState<T> {
        delegate!(self, p => p.initial_state())
    }

    fn step(&self, req: StepRequest<'_, T>) -> Result<StepOutcome<T>, StepError> {
        delegate!(self, p => p.step(req))
    }

    fn loss_weights(&self, grid: usize) -> Vec<T> {
        delegate!(self, p => p.loss_weights(grid))
    }
}
