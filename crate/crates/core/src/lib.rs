//! Parallel-in-time integration with MGRIT and the full approximation scheme.

pub mod excitation;
pub mod integrators;
pub mod mgrit;
pub mod runtime;
pub mod scalar;
pub mod spatial;
pub mod state;
pub mod time_grid;

pub use mgrit::{mgrit_solve, MgritOptions, SolveResult, SolverRun};
pub use scalar::Real;

pub type BlockStateF64 = state::BlockState<f64>;
pub type BlockStateF32 = state::BlockState<f32>;
pub type SpaceTimeVectorF64 = state::SpaceTimeVector<f64>;
pub type SpaceTimeVectorF32 = state::SpaceTimeVector<f32>;
pub type ModelProblemF64 = integrators::ModelProblem<f64>;
pub type ModelProblemF32 = integrators::ModelProblem<f32>;
pub type TimeHierarchyF64 = time_grid::TimeHierarchy<f64>;
pub type TimeHierarchyF32 = time_grid::TimeHierarchy<f32>;
