/// Owned index ranges `(lo, hi]` per level and worker.
///
/// Index 0 of every level holds the initial condition and is owned by no
/// one. On the finest level each worker gets whole C-intervals; coarse
/// ranges are the images of the fine ones, so a coarse point and the fine
/// C-point it came from always share an owner.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Decomposition {
    ranges: Vec<Vec<(usize, usize)>>,
}

impl Decomposition {
    /// `intervals[l]` is the interval count of level `l`; `factors[l]` the
    /// coarsening factor between levels `l` and `l + 1` (for the last level,
    /// its own C/F factor).
    pub fn new(intervals: &[usize], factors: &[usize], workers: usize) -> Self {
        assert!(workers >= 1, "at least one worker");
        assert!(!intervals.is_empty() && factors.len() >= intervals.len());
        let n0 = intervals[0];
        let m0 = factors[0];
        let k = n0.div_ceil(m0);
        let first: Vec<(usize, usize)> = (0..workers)
            .map(|w| {
                let a = (w * k).div_ceil(workers);
                let b = ((w + 1) * k).div_ceil(workers);
                ((a * m0).min(n0), (b * m0).min(n0))
            })
            .collect();
        let mut ranges = vec![first];
        for l in 1..intervals.len() {
            let m = factors[l - 1];
            let next = ranges[l - 1].iter().map(|&(lo, hi)| (lo / m, hi / m)).collect();
            ranges.push(next);
        }
        Self { ranges }
    }

    pub fn n_levels(&self) -> usize {
        self.ranges.len()
    }

    pub fn workers(&self) -> usize {
        self.ranges[0].len()
    }

    /// Owned indices are `lo + 1 ..= hi`.
    pub fn range(&self, level: usize, worker: usize) -> (usize, usize) {
        self.ranges[level][worker]
    }

    pub fn is_empty(&self, level: usize, worker: usize) -> bool {
        let (lo, hi) = self.range(level, worker);
        lo == hi
    }

    /// Nearest worker to the left owning points on `level`.
    pub fn left_peer(&self, level: usize, worker: usize) -> Option<usize> {
        (0..worker).rev().find(|&w| !self.is_empty(level, w))
    }

    /// Nearest worker to the right owning points on `level`.
    pub fn right_peer(&self, level: usize, worker: usize) -> Option<usize> {
        (worker + 1..self.workers()).find(|&w| !self.is_empty(level, w))
    }

    pub fn owner(&self, level: usize, index: usize) -> Option<usize> {
        self.ranges[level]
            .iter()
            .position(|&(lo, hi)| index > lo && index <= hi)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn whole_intervals_on_fine_level() {
        let d = Decomposition::new(&[16, 8, 4], &[2, 2, 2], 2);
        assert_eq!(d.range(0, 0), (0, 8));
        assert_eq!(d.range(0, 1), (8, 16));
        assert_eq!(d.range(1, 1), (4, 8));
        assert_eq!(d.range(2, 0), (0, 2));
        assert_eq!(d.left_peer(0, 1), Some(0));
        assert_eq!(d.right_peer(0, 1), None);
        assert_eq!(d.owner(0, 8), Some(0));
        assert_eq!(d.owner(0, 9), Some(1));
        assert_eq!(d.owner(0, 0), None);
    }

    #[test]
    fn excess_workers_idle() {
        let d = Decomposition::new(&[8, 2], &[4, 2], 4);
        let owned: Vec<_> = (0..4).filter(|&w| !d.is_empty(0, w)).collect();
        assert_eq!(owned.len(), 2);
        let last = *owned.last().unwrap();
        assert_eq!(d.right_peer(0, owned[0]), Some(last));
        assert_eq!(d.left_peer(0, last), Some(owned[0]));
    }

    #[test]
    fn trailing_partial_interval() {
        let d = Decomposition::new(&[5, 1], &[4, 2], 2);
        assert_eq!(d.range(0, 0), (0, 4));
        assert_eq!(d.range(0, 1), (4, 5));
        assert_eq!(d.range(1, 0), (0, 1));
        assert!(d.is_empty(1, 1));
    }

    proptest! {
        #[test]
        fn ranges_partition_every_level(n in 1usize..200, m in 2usize..6, workers in 1usize..9) {
            let mut intervals = vec![n];
            let mut factors = vec![];
            let mut f = m;
            while intervals.len() < 4 && *intervals.last().unwrap() / f >= 1 {
                intervals.push(intervals.last().unwrap() / f);
                factors.push(f);
                f = 2;
            }
            factors.push(2);
            let d = Decomposition::new(&intervals, &factors, workers);
            for (l, &nl) in intervals.iter().enumerate() {
                let mut next = 0;
                for w in 0..workers {
                    let (lo, hi) = d.range(l, w);
                    prop_assert_eq!(lo, next);
                    prop_assert!(hi >= lo);
                    next = hi;
                }
                prop_assert_eq!(next, nl);
                if l + 1 < intervals.len() {
                    for j in 1..=intervals[l + 1] {
                        prop_assert_eq!(d.owner(l + 1, j), d.owner(l, j * factors[l]));
                    }
                }
            }
        }
    }
}
