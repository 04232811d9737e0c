//! Relaxation on a whole level held by one worker.

use thiserror::Error;

use crate::integrators::{Propagator, StepError, TimeIntegrator};
use crate::scalar::Real;
use crate::state::{ShapeError, SpaceTimeVector};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RelaxError {
    #[error("vectors must start at index 0 and match the time grid")]
    Layout,
    #[error("coarsening factor must be at least 2, got {0}")]
    Factor(usize),
    #[error("step {index} failed: {source}")]
    Step {
        index: usize,
        #[source]
        source: StepError,
    },
    #[error(transparent)]
    Shape(#[from] ShapeError),
}

fn check<T: Real, I: TimeIntegrator<T> + ?Sized>(
    phi: &Propagator<'_, T, I>,
    m: usize,
    u: &SpaceTimeVector<T>,
    g: &SpaceTimeVector<T>,
) -> Result<(), RelaxError> {
    if m < 2 {
        return Err(RelaxError::Factor(m));
    }
    let n = phi.time_grid().len();
    if u.start != 0 || g.start != 0 || u.len() != n || g.len() != n {
        return Err(RelaxError::Layout);
    }
    Ok(())
}

fn update<T: Real, I: TimeIntegrator<T> + ?Sized>(
    phi: &Propagator<'_, T, I>,
    u: &mut SpaceTimeVector<T>,
    g: &SpaceTimeVector<T>,
    i: usize,
) -> Result<(), RelaxError> {
    let mut next = phi
        .apply(i, &u.states[i - 1])
        .map_err(|source| RelaxError::Step { index: i, source })?
        .state;
    next.add_assign(&g.states[i])?;
    u.states[i] = next;
    Ok(())
}

/// `u_i = Phi(u_{i-1}) + g_i` for every F-point, interval by interval.
pub fn f_relaxation<T: Real, I: TimeIntegrator<T> + ?Sized>(
    phi: &Propagator<'_, T, I>,
    m: usize,
    u: &mut SpaceTimeVector<T>,
    g: &SpaceTimeVector<T>,
) -> Result<(), RelaxError> {
    check(phi, m, u, g)?;
    for i in 1..u.len() {
        if i % m != 0 {
            update(phi, u, g, i)?;
        }
    }
    Ok(())
}

/// `u_c = Phi(u_{c-1}) + g_c` for every C-point `c > 0`.
pub fn c_relaxation<T: Real, I: TimeIntegrator<T> + ?Sized>(
    phi: &Propagator<'_, T, I>,
    m: usize,
    u: &mut SpaceTimeVector<T>,
    g: &SpaceTimeVector<T>,
) -> Result<(), RelaxError> {
    check(phi, m, u, g)?;
    for c in (m..u.len()).step_by(m) {
        update(phi, u, g, c)?;
    }
    Ok(())
}
