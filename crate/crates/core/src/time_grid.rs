//! Temporal grids, C/F splittings and the MGRIT time hierarchy.
//!
//! The fine grid is uniform. Every coarser grid is the set of C-points of the
//! grid above it; coarse grids store their own time values (copied bitwise
//! from the finer grid) so that non-uniform factor sequences need no special
//! handling.

use thiserror::Error;

use crate::scalar::Real;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GridError {
    #[error("invalid time domain: tf ({tf}) must exceed t0 ({t0})")]
    InvalidDomain { t0: f64, tf: f64 },
    #[error("invalid step count {0}: at least one step is required")]
    InvalidSteps(usize),
    #[error("invalid coarsening factor {0}: must be greater than 1")]
    InvalidFactor(usize),
    #[error("coarsening level {level} by factor {factor} leaves {points} point(s); at least 2 are required")]
    TooCoarse {
        level: usize,
        factor: usize,
        points: usize,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct TimeGrid<T> {
    pub t0: T,
    pub tf: T,
    pub points: Vec<T>,
    pub level: usize,
}

impl<T: Real> TimeGrid<T> {
    /// Number of time steps (intervals) on this grid.
    pub fn n_intervals(&self) -> usize {
        self.points.len() - 1
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Step size between points `i - 1` and `i`.
    pub fn dt(&self, i: usize) -> T {
        self.points[i] - self.points[i - 1]
    }

    /// The grid formed by the C-points of this grid under factor `m`.
    pub fn coarsen(&self, m: usize) -> Result<TimeGrid<T>, GridError> {
        if m < 2 {
            return Err(GridError::InvalidFactor(m));
        }
        let points: Vec<T> = self.points.iter().step_by(m).copied().collect();
        if points.len() < 2 {
            return Err(GridError::TooCoarse {
                level: self.level,
                factor: m,
                points: points.len(),
            });
        }
        Ok(TimeGrid {
            t0: self.t0,
            tf: *points.last().unwrap(),
            points,
            level: self.level + 1,
        })
    }
}

/// Uniform grid with `n_steps` intervals on `[t0, tf]`.
pub fn build_uniform_grid<T: Real>(t0: T, tf: T, n_steps: usize) -> Result<TimeGrid<T>, GridError> {
    if !(tf > t0) {
        return Err(GridError::InvalidDomain {
            t0: t0.as_f64(),
            tf: tf.as_f64(),
        });
    }
    if n_steps < 1 {
        return Err(GridError::InvalidSteps(n_steps));
    }
    let dt = (tf - t0) / T::from_usize(n_steps).unwrap();
    let mut points: Vec<T> = (0..=n_steps)
        .map(|i| t0 + T::from_usize(i).unwrap() * dt)
        .collect();
    points[n_steps] = tf;
    Ok(TimeGrid {
        t0,
        tf,
        points,
        level: 0,
    })
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CfSplitting {
    pub factor: usize,
    pub c_indices: Vec<usize>,
    pub f_indices: Vec<usize>,
}

impl CfSplitting {
    pub fn is_c_point(&self, i: usize) -> bool {
        i % self.factor == 0
    }
}

/// C-points at indices `0, m, 2m, ...`; everything else is an F-point. A
/// trailing partial interval (no closing C-point) is allowed.
pub fn cf_split<T: Real>(grid: &TimeGrid<T>, m: usize) -> Result<CfSplitting, GridError> {
    split_points(grid.len(), m)
}

pub(crate) fn split_points(n_points: usize, m: usize) -> Result<CfSplitting, GridError> {
    if m < 2 {
        return Err(GridError::InvalidFactor(m));
    }
    let (c_indices, f_indices) = (0..n_points).partition(|i| i % m == 0);
    Ok(CfSplitting {
        factor: m,
        c_indices,
        f_indices,
    })
}

/// Plans per-level coarsening factors: a first factor that leaves roughly
/// one coarse interval per worker, then `coarse_factor` on every further
/// level while the next grid keeps at least three points.
///
/// Factors below two are clamped to two. Degenerate inputs yield an empty
/// plan (a one-level hierarchy).
pub fn plan_coarsening(
    n_steps: usize,
    n_workers: usize,
    max_levels: usize,
    coarse_factor: usize,
) -> Vec<usize> {
    let mut factors = Vec::new();
    if max_levels < 2 || n_steps == 0 {
        return factors;
    }
    let workers = n_workers.max(1);
    let first = n_steps.div_ceil(workers).max(2);
    let mut intervals = n_steps / first;
    if intervals < 1 {
        return factors;
    }
    factors.push(first);
    let m = coarse_factor.max(2);
    while factors.len() + 1 < max_levels {
        let next = intervals / m;
        if next + 1 < 3 {
            break;
        }
        factors.push(m);
        intervals = next;
    }
    factors
}

/// Per-level grids, finest first.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeHierarchy<T> {
    pub grids: Vec<TimeGrid<T>>,
    /// Coarsening factor between level `l` and `l + 1`.
    pub factors: Vec<usize>,
    /// C/F factor used on the coarsest level. It only decides which coarsest
    /// states are retained between cycles; the coarsest solve itself is a
    /// sequential sweep over every point.
    pub coarsest_factor: usize,
}

impl<T: Real> TimeHierarchy<T> {
    pub fn new(fine: TimeGrid<T>, factors: &[usize], coarsest_factor: usize) -> Result<Self, GridError> {
        if coarsest_factor < 2 {
            return Err(GridError::InvalidFactor(coarsest_factor));
        }
        let mut grids = vec![fine];
        for &m in factors {
            let next = grids.last().unwrap().coarsen(m)?;
            grids.push(next);
        }
        Ok(Self {
            grids,
            factors: factors.to_vec(),
            coarsest_factor,
        })
    }

    /// Hierarchy planned with [`plan_coarsening`]; the coarsest level uses
    /// `coarse_factor` for its own splitting.
    pub fn planned(
        fine: TimeGrid<T>,
        n_workers: usize,
        max_levels: usize,
        coarse_factor: usize,
    ) -> Result<Self, GridError> {
        let factors = plan_coarsening(fine.n_intervals(), n_workers, max_levels, coarse_factor);
        Self::new(fine, &factors, coarse_factor.max(2))
    }

    pub fn n_levels(&self) -> usize {
        self.grids.len()
    }

    /// C/F factor on level `l` when the hierarchy is truncated to
    /// `active_levels` levels.
    pub fn level_factor(&self, l: usize, active_levels: usize) -> usize {
        if l + 1 < active_levels {
            self.factors[l]
        } else {
            self.factors.get(l).copied().unwrap_or(self.coarsest_factor)
        }
    }

    /// C/F factor of every level (inter-level factors, then the coarsest one).
    pub fn storage_factors(&self) -> Vec<usize> {
        let mut f = self.factors.clone();
        f.push(self.coarsest_factor);
        f
    }

    pub fn point_counts(&self) -> Vec<usize> {
        self.grids.iter().map(|g| g.len()).collect()
    }
}
