//! Nested 1D spatial grids on the unit interval (interior Dirichlet nodes)
//! and the block transfer operators between them.

use thiserror::Error;

use crate::scalar::Real;
use crate::state::BlockState;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SpatialError {
    #[error("spatial grid {0} has no coarser grid")]
    NoCoarserGrid(usize),
    #[error("spatial grid {0} has no finer grid")]
    NoFinerGrid(usize),
    #[error("cannot build {grids} nested grids from {n_finest} interior points")]
    NotNested { n_finest: usize, grids: usize },
    #[error("state on grid {grid} has {got} field entries, expected {expected}")]
    FieldLength {
        grid: usize,
        got: usize,
        expected: usize,
    },
}

/// Interior point counts per grid, finest first, with `n_fine = 2 n_coarse + 1`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SpatialHierarchy {
    sizes: Vec<usize>,
}

impl SpatialHierarchy {
    pub fn new(n_finest: usize, n_grids: usize) -> Result<Self, SpatialError> {
        let err = SpatialError::NotNested {
            n_finest,
            grids: n_grids,
        };
        if n_finest == 0 || n_grids == 0 {
            return Err(err);
        }
        let mut sizes = vec![n_finest];
        for _ in 1..n_grids {
            let n = *sizes.last().unwrap();
            if n < 3 || n % 2 == 0 {
                return Err(err);
            }
            sizes.push((n - 1) / 2);
        }
        Ok(Self { sizes })
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn n_grids(&self) -> usize {
        self.sizes.len()
    }

    pub fn size(&self, grid: usize) -> usize {
        self.sizes[grid]
    }

    /// Mesh width of a grid.
    pub fn h(&self, grid: usize) -> f64 {
        1.0 / (self.sizes[grid] + 1) as f64
    }

    /// Coordinates of the interior nodes of a grid.
    pub fn nodes(&self, grid: usize) -> Vec<f64> {
        let h = self.h(grid);
        (1..=self.sizes[grid]).map(|j| j as f64 * h).collect()
    }

    fn check<T>(&self, x: &BlockState<T>) -> Result<(), SpatialError> {
        let expected = self.sizes.get(x.grid).copied().unwrap_or(0);
        if x.field.len() != expected {
            return Err(SpatialError::FieldLength {
                grid: x.grid,
                got: x.field.len(),
                expected,
            });
        }
        Ok(())
    }

    /// Injection onto the next coarser grid; scalars are copied.
    pub fn restrict_state<T: Real>(&self, x: &BlockState<T>) -> Result<BlockState<T>, SpatialError> {
        self.check(x)?;
        let k = x.grid;
        if k + 1 >= self.sizes.len() {
            return Err(SpatialError::NoCoarserGrid(k));
        }
        // coarse node j sits at fine index 2j + 1
        let field = (0..self.sizes[k + 1]).map(|j| x.field[2 * j + 1]).collect();
        Ok(BlockState::new(field, x.scalars.clone(), k + 1))
    }

    /// Linear interpolation onto the next finer grid; scalars are copied.
    pub fn prolong_error<T: Real>(&self, e: &BlockState<T>) -> Result<BlockState<T>, SpatialError> {
        self.check(e)?;
        let k = e.grid;
        if k == 0 {
            return Err(SpatialError::NoFinerGrid(k));
        }
        let nc = e.field.len();
        let half = T::lit(0.5);
        let at = |j: usize| if j < nc { e.field[j] } else { T::zero() };
        let mut field = vec![T::zero(); self.sizes[k - 1]];
        for (i, v) in field.iter_mut().enumerate() {
            *v = if i % 2 == 1 {
                e.field[i / 2]
            } else {
                let right = at(i / 2);
                let left = if i == 0 { T::zero() } else { e.field[i / 2 - 1] };
                half * (left + right)
            };
        }
        Ok(BlockState::new(field, e.scalars.clone(), k - 1))
    }

    /// Moves a state to `target` by repeated restriction or prolongation.
    pub fn transfer<T: Real>(
        &self,
        x: &BlockState<T>,
        target: usize,
    ) -> Result<BlockState<T>, SpatialError> {
        let mut out = x.clone();
        while out.grid < target {
            out = self.restrict_state(&out)?;
        }
        while out.grid > target {
            out = self.prolong_error(&out)?;
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SpatialStrategy {
    #[default]
    None,
    Direct,
    Delayed,
}

/// Spatial grid index for every time level.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LevelAssignment(pub Vec<usize>);

impl LevelAssignment {
    pub fn grid(&self, level: usize) -> usize {
        self.0[level]
    }
}

/// Direct coarsening moves to a coarser grid on every level until the
/// coarsest grid is reached; delayed coarsening keeps the finest grid as
/// long as possible and uses the coarse grids only on the last levels.
/// When there are fewer time levels than grids, delayed coarsening uses
/// only as many grids as there are levels.
pub fn assign_spatial_levels(
    strategy: SpatialStrategy,
    n_time_levels: usize,
    n_spatial_grids: usize,
) -> LevelAssignment {
    let n_s = n_spatial_grids.max(1);
    let grids = (0..n_time_levels)
        .map(|l| match strategy {
            SpatialStrategy::None => 0,
            SpatialStrategy::Direct => l.min(n_s - 1),
            SpatialStrategy::Delayed => {
                let n_eff = n_s.min(n_time_levels);
                l.saturating_sub(n_time_levels - n_eff)
            }
        })
        .collect();
    LevelAssignment(grids)
}
