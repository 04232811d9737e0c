//! Block states (one time point) and space-time vectors (one level).

use thiserror::Error;

use crate::integrators::{Propagator, StepError, TimeIntegrator};
use crate::scalar::Real;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ShapeError {
    #[error("state shape mismatch: field {lhs_field} vs {rhs_field}, scalars {lhs_scalars} vs {rhs_scalars}, grid {lhs_grid} vs {rhs_grid}")]
    State {
        lhs_field: usize,
        rhs_field: usize,
        lhs_scalars: usize,
        rhs_scalars: usize,
        lhs_grid: usize,
        rhs_grid: usize,
    },
    #[error("space-time vector mismatch: {lhs} states starting at {lhs_start} vs {rhs} starting at {rhs_start}")]
    SpaceTime {
        lhs_start: usize,
        lhs: usize,
        rhs_start: usize,
        rhs: usize,
    },
}

/// Unknowns at one time point: a grid-dependent field and grid-independent
/// scalars (currents, rotor angle, angular velocity, ...).
#[derive(Debug, Clone, PartialEq, Default)]
pub struct BlockState<T> {
    pub field: Vec<T>,
    pub scalars: Vec<T>,
    /// Spatial grid the field lives on (0 = finest).
    pub grid: usize,
}

impl<T: Real> BlockState<T> {
    pub fn new(field: Vec<T>, scalars: Vec<T>, grid: usize) -> Self {
        Self {
            field,
            scalars,
            grid,
        }
    }

    pub fn zeros(grid: usize, n_field: usize, n_scalars: usize) -> Self {
        Self::new(vec![T::zero(); n_field], vec![T::zero(); n_scalars], grid)
    }

    pub fn zeros_like(other: &Self) -> Self {
        Self::zeros(other.grid, other.field.len(), other.scalars.len())
    }

    pub fn len(&self) -> usize {
        self.field.len() + self.scalars.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn same_shape(&self, other: &Self) -> bool {
        self.grid == other.grid
            && self.field.len() == other.field.len()
            && self.scalars.len() == other.scalars.len()
    }

    fn check(&self, other: &Self) -> Result<(), ShapeError> {
        if self.same_shape(other) {
            Ok(())
        } else {
            Err(ShapeError::State {
                lhs_field: self.field.len(),
                rhs_field: other.field.len(),
                lhs_scalars: self.scalars.len(),
                rhs_scalars: other.scalars.len(),
                lhs_grid: self.grid,
                rhs_grid: other.grid,
            })
        }
    }

    pub fn values(&self) -> impl Iterator<Item = &T> {
        self.field.iter().chain(self.scalars.iter())
    }

    fn values_mut(&mut self) -> impl Iterator<Item = &mut T> {
        self.field.iter_mut().chain(self.scalars.iter_mut())
    }

    /// `self += alpha * x`.
    pub fn axpy(&mut self, alpha: T, x: &Self) -> Result<(), ShapeError> {
        self.check(x)?;
        for (y, &xv) in self.values_mut().zip(x.values()) {
            *y += alpha * xv;
        }
        Ok(())
    }

    /// `self - other`.
    pub fn sub(&self, other: &Self) -> Result<Self, ShapeError> {
        let mut out = self.clone();
        out.axpy(-T::one(), other)?;
        Ok(out)
    }

    pub fn add_assign(&mut self, other: &Self) -> Result<(), ShapeError> {
        self.axpy(T::one(), other)
    }

    pub fn sum_squares(&self) -> T {
        self.values().map(|&v| v * v).sum()
    }

    pub fn max_abs(&self) -> T {
        self.values().fold(T::zero(), |m, &v| m.max(v.abs()))
    }
}

/// The states of one level over a contiguous index range `start..start+len`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SpaceTimeVector<T> {
    pub start: usize,
    pub states: Vec<BlockState<T>>,
}

impl<T: Real> SpaceTimeVector<T> {
    pub fn new(start: usize, states: Vec<BlockState<T>>) -> Self {
        Self { start, states }
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    /// One past the last owned index.
    pub fn end(&self) -> usize {
        self.start + self.states.len()
    }

    pub fn indices(&self) -> std::ops::Range<usize> {
        self.start..self.end()
    }

    pub fn get(&self, i: usize) -> Option<&BlockState<T>> {
        i.checked_sub(self.start).and_then(|k| self.states.get(k))
    }

    pub fn get_mut(&mut self, i: usize) -> Option<&mut BlockState<T>> {
        i.checked_sub(self.start).and_then(move |k| self.states.get_mut(k))
    }

    fn check(&self, other: &Self) -> Result<(), ShapeError> {
        if self.start != other.start || self.len() != other.len() {
            return Err(ShapeError::SpaceTime {
                lhs_start: self.start,
                lhs: self.len(),
                rhs_start: other.start,
                rhs: other.len(),
            });
        }
        Ok(())
    }

    /// Local sum of squares; global norms reduce these across workers.
    pub fn sum_squares(&self) -> T {
        self.states.iter().map(BlockState::sum_squares).sum()
    }

    pub fn max_abs(&self) -> T {
        self.states.iter().fold(T::zero(), |m, s| m.max(s.max_abs()))
    }

    pub fn max_abs_diff(&self, other: &Self) -> Result<T, ShapeError> {
        self.check(other)?;
        let mut m = T::zero();
        for (a, b) in self.states.iter().zip(&other.states) {
            m = m.max(a.sub(b)?.max_abs());
        }
        Ok(m)
    }
}

/// `y + alpha * x`, componentwise over fields and scalars.
pub fn axpy<T: Real>(
    alpha: T,
    x: &SpaceTimeVector<T>,
    y: &SpaceTimeVector<T>,
) -> Result<SpaceTimeVector<T>, ShapeError> {
    y.check(x)?;
    let mut out = y.clone();
    for (o, xs) in out.states.iter_mut().zip(&x.states) {
        o.axpy(alpha, xs)?;
    }
    Ok(out)
}

/// Discrete L2 norm over all time points, field entries and scalar entries
/// (scalars carry unit weight). Single-worker form; see
/// [`crate::runtime::Communicator::global_norm`] for the distributed one.
pub fn discrete_l2_norm<T: Real>(r: &SpaceTimeVector<T>) -> T {
    r.sum_squares().sqrt()
}

#[derive(Debug, Error)]
pub enum ResidualError {
    #[error(transparent)]
    Shape(#[from] ShapeError),
    #[error("time step {index} failed: {source}")]
    Step {
        index: usize,
        #[source]
        source: StepError,
    },
}

/// Residual of the block lower-bidiagonal system `A(u) = g` on one level:
/// `r_0 = g_0 - u_0` and `r_i = g_i - (u_i - Phi_i(u_{i-1}))`.
///
/// `u` and `g` must both start at index 0. Forcing is part of `Phi`, so on
/// the finest grid `g` is zero except at index 0.
pub fn space_time_residual<T: Real, I: TimeIntegrator<T> + ?Sized>(
    phi: &Propagator<'_, T, I>,
    u: &SpaceTimeVector<T>,
    g: &SpaceTimeVector<T>,
) -> Result<SpaceTimeVector<T>, ResidualError> {
    u.check(g)?;
    let mut out = Vec::with_capacity(u.len());
    for (k, (ui, gi)) in u.states.iter().zip(&g.states).enumerate() {
        let i = u.start + k;
        let mut r = gi.sub(ui)?;
        if i > 0 {
            let prev = if k > 0 {
                &u.states[k - 1]
            } else {
                return Err(ShapeError::SpaceTime {
                    lhs_start: u.start,
                    lhs: u.len(),
                    rhs_start: 0,
                    rhs: u.len(),
                }
                .into());
            };
            let stepped = phi
                .apply(i, prev)
                .map_err(|source| ResidualError::Step { index: i, source })?;
            r.add_assign(&stepped.state)?;
        }
        out.push(r);
    }
    Ok(SpaceTimeVector::new(u.start, out))
}
