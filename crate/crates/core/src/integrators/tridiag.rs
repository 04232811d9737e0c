//! Tridiagonal LU (Thomas algorithm) and a small factorization cache.

use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use super::StepError;
use crate::scalar::Real;

/// Factored tridiagonal matrix. Row `i` is `lower[i] x[i-1] + diag[i] x[i] + upper[i] x[i+1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct TridiagLu<T> {
    mult: Vec<T>,
    pivot: Vec<T>,
    upper: Vec<T>,
}

impl<T: Real> TridiagLu<T> {
    /// `lower[0]` and `upper[n-1]` are ignored.
    pub fn factor(lower: &[T], diag: &[T], upper: &[T]) -> Result<Self, StepError> {
        let n = diag.len();
        let mut mult = vec![T::zero(); n];
        let mut pivot = vec![T::zero(); n];
        for i in 0..n {
            let mut d = diag[i];
            if i > 0 {
                mult[i] = lower[i] / pivot[i - 1];
                d -= mult[i] * upper[i - 1];
            }
            if d == T::zero() || !d.is_finite() {
                return Err(StepError::Singular { row: i });
            }
            pivot[i] = d;
        }
        Ok(Self {
            mult,
            pivot,
            upper: upper.to_vec(),
        })
    }

    pub fn len(&self) -> usize {
        self.pivot.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pivot.is_empty()
    }

    /// Overwrites `rhs` with the solution.
    pub fn solve_in_place(&self, rhs: &mut [T]) {
        let n = self.pivot.len();
        for i in 1..n {
            let prev = rhs[i - 1];
            rhs[i] -= self.mult[i] * prev;
        }
        for i in (0..n).rev() {
            let mut v = rhs[i];
            if i + 1 < n {
                v -= self.upper[i] * rhs[i + 1];
            }
            rhs[i] = v / self.pivot[i];
        }
    }
}

const CACHE_CAPACITY: usize = 64;

/// Factorizations keyed by spatial grid and the exact bits of the step size.
/// The cache is cleared wholesale when full; results never depend on hits.
#[derive(Debug, Default)]
pub struct FactorCache<T> {
    map: Mutex<HashMap<(usize, u64), Arc<TridiagLu<T>>>>,
}

impl<T: Real> FactorCache<T> {
    pub fn new() -> Self {
        Self {
            map: Mutex::new(HashMap::new()),
        }
    }

    pub fn get_or_factor<F>(&self, grid: usize, dt: T, build: F) -> Result<Arc<TridiagLu<T>>, StepError>
    where
        F: FnOnce() -> Result<TridiagLu<T>, StepError>,
    {
        let key = (grid, dt.as_f64().to_bits());
        if let Some(f) = self.lock().get(&key) {
            return Ok(Arc::clone(f));
        }
        let f = Arc::new(build()?);
        let mut map = self.lock();
        if map.len() >= CACHE_CAPACITY {
            map.clear();
        }
        map.insert(key, Arc::clone(&f));
        Ok(f)
    }

    pub fn len(&self) -> usize {
        self.lock().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn lock(&self) -> std::sync::MutexGuard<'_, HashMap<(usize, u64), Arc<TridiagLu<T>>>> {
        // a poisoned map only means another thread panicked mid-insert
        self.map.lock().unwrap_or_else(|e| e.into_inner())
    }
}
