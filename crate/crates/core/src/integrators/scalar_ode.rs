use super::{StepError, StepOutcome, StepRequest, TimeIntegrator};
use crate::scalar::Real;
use crate::spatial::SpatialHierarchy;
use crate::state::BlockState;

/// Scalar test equation `u' = lambda u`, stored as a one-entry field.
#[derive(Debug, Clone)]
pub struct ScalarOde<T> {
    pub lambda: T,
    pub u0: T,
    spatial: SpatialHierarchy,
}

impl<T: Real> ScalarOde<T> {
    pub fn new(lambda: T, u0: T) -> Self {
        Self {
            lambda,
            u0,
            spatial: SpatialHierarchy::new(1, 1).expect("single grid"),
        }
    }
}

impl<T: Real> TimeIntegrator<T> for ScalarOde<T> {
    fn spatial(&self) -> &SpatialHierarchy {
        &self.spatial
    }

    fn n_scalars(&self) -> usize {
        0
    }

    fn initial_state(&self) -> BlockState<T> {
        BlockState::new(vec![self.u0], vec![], 0)
    }

    fn step(&self, req: StepRequest<'_, T>) -> Result<StepOutcome<T>, StepError> {
        let dt = req.dt()?;
        self.check_shape(req.u_prev)?;
        let u = req.u_prev.field[0] / (T::one() - self.lambda * dt);
        Ok(StepOutcome::direct(BlockState::new(vec![u], vec![], 0)))
    }

    fn loss_weights(&self, _grid: usize) -> Vec<T> {
        vec![T::one()]
    }
}
