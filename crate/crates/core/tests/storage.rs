mod common;

use common::*;
use mgrit_core::mgrit::{mgrit_solve, storage_estimate, CycleType, StoppingCriterion};
use mgrit_core::spatial::SpatialStrategy;
use mgrit_core::integrators::TimeIntegrator;

#[test]
fn measured_peak_matches_estimate() {
    let configs = [(2, 64, 4, 1), (2, 64, 4, 4), (3, 128, 2, 2), (3, 96, 2, 4), (5, 256, 2, 1), (5, 256, 2, 4)];
    for (levels, n_t, m, p) in configs {
        let problem = linear(15, 3);
        let h = hierarchy(n_t, m, levels);
        for strategy in [SpatialStrategy::None, SpatialStrategy::Direct] {
            let mut opts = options(CycleType::V, 1, strategy);
            opts.stopping = StoppingCriterion::fixed();
            opts.cycle.max_iters = 1;
            let run = mgrit_solve(&problem, &h, &opts, p).unwrap().run;
            let factors = h.storage_factors();
            let ones = vec![1; levels];
            let est = storage_estimate(levels, n_t, &factors, p, &ones).unwrap();
            assert_eq!(run.storage.states, est.total, "L={levels} p={p}");
            assert_eq!(run.storage.per_level, est.per_level);
            let grids = mgrit_core::spatial::assign_spatial_levels(strategy, levels, 3);
            let sizes: Vec<usize> = (0..levels).map(|l| problem.spatial().size(grids.grid(l))).collect();
            let units = storage_estimate(levels, n_t, &factors, p, &sizes).unwrap();
            assert_eq!(run.storage.units, units.total);
        }
    }
}
