//! Distributed FAS cycles.
//!
//! Each worker owns `(lo, hi]` on every level (see [`Decomposition`]) and
//! stores only what the cycle needs between sweeps: the current values at
//! its C-points on every level and, on coarse levels, the restricted fine
//! values and the FAS right-hand side at all of its points. F-values are
//! recomputed on the fly inside each sweep.
//!
//! A sweep handles the runs that start at the worker's own C-points first,
//! from right to left, so the state at `hi` can be sent to the right
//! neighbour before anything is received; the run leading into the first
//! owned C-point waits for the left neighbour.

use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use super::{qoi_change, CycleType, InitialGuess, MgritOptions, RunOutcome, SolverRun, StorageReport, StoppingKind};
use crate::excitation::Forcing;
use crate::integrators::{joule_loss, StepError, StepRequest, TimeIntegrator};
use crate::runtime::{run_threads, tags, Communicator, Decomposition, Transport, TransportError};
use crate::scalar::Real;
use crate::spatial::{assign_spatial_levels, SpatialError};
use crate::state::{BlockState, ShapeError, SpaceTimeVector};
use crate::time_grid::TimeHierarchy;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SetupError {
    #[error("at least one worker is required")]
    NoWorkers,
    #[error("two-level cycles need a hierarchy with at least two levels")]
    TwoLevelNeedsCoarseGrid,
    #[error("provided initial guess must cover all {expected} fine points on grid 0")]
    InitialGuess { expected: usize },
    #[error("initial state does not fit the problem: {0}")]
    InitialState(StepError),
    #[error(transparent)]
    Spatial(#[from] SpatialError),
}

#[derive(Debug, Error)]
enum SolveError {
    #[error("level {level}, step {index}: {source}")]
    Step {
        level: usize,
        index: usize,
        #[source]
        source: StepError,
    },
    #[error(transparent)]
    Transport(#[from] TransportError),
    #[error(transparent)]
    Spatial(#[from] SpatialError),
    #[error(transparent)]
    Shape(#[from] ShapeError),
}

impl SolveError {
    /// Text that identifies the original failure, also when it was relayed.
    fn reason(&self) -> String {
        match self {
            SolveError::Transport(TransportError::Aborted { reason, .. }) => reason.clone(),
            e => e.to_string(),
        }
    }
}

/// Result of one worker; only worker 0 carries the solution and the
/// complete run record.
#[derive(Debug, Clone)]
pub struct WorkerOutput<T> {
    pub rank: usize,
    pub run: SolverRun,
    pub solution: Option<SpaceTimeVector<T>>,
}

#[derive(Debug, Clone)]
pub struct SolveResult<T> {
    pub run: SolverRun,
    /// Fine-level solution; absent when the run failed.
    pub solution: Option<SpaceTimeVector<T>>,
}

/// Solves on `workers` threads connected by in-process channels.
pub fn mgrit_solve<T: Real, I: TimeIntegrator<T> + ?Sized>(
    problem: &I,
    hierarchy: &TimeHierarchy<T>,
    opts: &MgritOptions<T>,
    workers: usize,
) -> Result<SolveResult<T>, SetupError> {
    if workers == 0 {
        return Err(SetupError::NoWorkers);
    }
    let outputs = run_threads(workers, |t| solve_on_transport(problem, hierarchy, opts, t));
    let mut root = None;
    for out in outputs {
        let out = out?;
        if out.rank == 0 {
            root = Some(out);
        }
    }
    let root = root.expect("worker 0 always reports");
    Ok(SolveResult {
        run: root.run,
        solution: root.solution,
    })
}

/// Runs this worker's part of the solve. All workers must call this with
/// identical arguments.
pub fn solve_on_transport<T: Real, I: TimeIntegrator<T> + ?Sized, Tr: Transport<T>>(
    problem: &I,
    hierarchy: &TimeHierarchy<T>,
    opts: &MgritOptions<T>,
    transport: Tr,
) -> Result<WorkerOutput<T>, SetupError> {
    let setup_start = Instant::now();
    let mut w = Worker::new(problem, hierarchy, opts, transport)?;
    let rank = w.ctx.rank;
    let result = w.run(setup_start);
    let mut run = w.record;
    let solution = match result {
        Ok(sol) => sol,
        Err(e) => {
            let reason = e.reason();
            w.ctx.comm.abort(&reason);
            run.outcome = RunOutcome::Failed(reason);
            None
        }
    };
    run.level_times = w.levels.iter().map(|l| l.elapsed.as_secs_f64()).collect();
    run.newton_iterations = run.newton_iterations.max(w.ctx.newton);
    Ok(WorkerOutput { rank, run, solution })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Mode {
    /// F-sweep followed by a C-sweep.
    Relax { measure: bool },
    /// F-sweep, then residuals at C-points; writes the coarse level when one
    /// is passed as target.
    Restrict { measure: bool },
    /// F-sweep adding `v - u2` to the finer level's C-points.
    Interpolate,
    /// F-sweep overwriting the finer level's C-points with the values.
    Seed,
    /// F-sweep writing every value to the output.
    Materialize,
}

enum Target<'b, 'h, T> {
    None,
    Coarse(&'b mut Level<'h, T>),
    Fine(&'b mut Level<'h, T>),
    Output(&'b mut Vec<BlockState<T>>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum CoarseAction {
    Correct,
    Seed,
    Keep,
}

struct Level<'h, T> {
    times: &'h [T],
    m: usize,
    spatial: usize,
    lo: usize,
    hi: usize,
    c_first: usize,
    c_vals: Vec<BlockState<T>>,
    u2: Vec<BlockState<T>>,
    g: Vec<BlockState<T>>,
    rhs_active: bool,
    /// Initial condition on this level's spatial grid (index 0).
    init: BlockState<T>,
    elapsed: Duration,
}

impl<T: Real> Level<'_, T> {
    fn is_empty(&self) -> bool {
        self.lo == self.hi
    }

    fn c_points(&self) -> Vec<usize> {
        (self.c_first..=self.hi).step_by(self.m).collect()
    }

    fn c_slot(&self, c: usize) -> usize {
        (c - self.c_first) / self.m
    }

    fn slot(&self, i: usize) -> usize {
        i - self.lo - 1
    }

    fn stored_states(&self) -> usize {
        self.c_vals.len() + self.u2.len() + self.g.len()
    }
}

struct Ctx<'a, T, I: ?Sized, Tr> {
    problem: &'a I,
    comm: Communicator<T, Tr>,
    decomp: Decomposition,
    rank: usize,
    forcing: Forcing,
    weights: Vec<T>,
    newton: u64,
}

impl<T: Real, I: TimeIntegrator<T> + ?Sized, Tr: Transport<T>> Ctx<'_, T, I, Tr> {
    fn phi(&mut self, level: usize, times: &[T], i: usize, prev: &BlockState<T>) -> Result<BlockState<T>, SolveError> {
        let req = StepRequest::new(prev, times[i - 1], times[i]).with_forcing(self.forcing);
        let out = self
            .problem
            .step(req)
            .map_err(|source| SolveError::Step { level, index: i, source })?;
        self.newton += out.newton_iterations as u64;
        Ok(out.state)
    }

    /// `Phi(prev) + g_i`, with `g` only on levels whose right-hand side is active.
    fn step(&mut self, level: usize, lvl: &Level<'_, T>, i: usize, prev: &BlockState<T>) -> Result<BlockState<T>, SolveError> {
        let mut s = self.phi(level, lvl.times, i, prev)?;
        if lvl.rhs_active {
            s.add_assign(&lvl.g[lvl.slot(i)])?;
        }
        Ok(s)
    }

    fn transfer(&self, x: &BlockState<T>, grid: usize) -> Result<BlockState<T>, SolveError> {
        Ok(self.problem.spatial().transfer(x, grid)?)
    }
}

#[derive(Default)]
struct SweepOut {
    sumsq: f64,
    losses: Vec<f64>,
}

struct Worker<'a, 'h, T, I: ?Sized, Tr> {
    ctx: Ctx<'a, T, I, Tr>,
    levels: Vec<Level<'h, T>>,
    opts: &'a MgritOptions<T>,
    n_fine: usize,
    record: SolverRun,
}

impl<'a, 'h, T: Real, I: TimeIntegrator<T> + ?Sized, Tr: Transport<T>> Worker<'a, 'h, T, I, Tr>
where
    'h: 'a,
{
    fn new(
        problem: &'a I,
        hierarchy: &'h TimeHierarchy<T>,
        opts: &'a MgritOptions<T>,
        transport: Tr,
    ) -> Result<Self, SetupError> {
        let n_levels = match opts.cycle.cycle_type {
            CycleType::TwoLevel if hierarchy.n_levels() < 2 => return Err(SetupError::TwoLevelNeedsCoarseGrid),
            CycleType::TwoLevel => 2,
            _ => hierarchy.n_levels(),
        };
        let comm = Communicator::new(transport);
        let rank = comm.rank();
        let init0 = problem.initial_state();
        problem.check_shape(&init0).map_err(SetupError::InitialState)?;
        let spatial = problem.spatial();
        let assignment = assign_spatial_levels(opts.cycle.spatial_strategy, n_levels, spatial.n_grids());
        let factors: Vec<usize> = (0..n_levels).map(|l| hierarchy.level_factor(l, n_levels)).collect();
        let intervals: Vec<usize> = (0..n_levels).map(|l| hierarchy.grids[l].n_intervals()).collect();
        let decomp = Decomposition::new(&intervals, &factors, comm.size());

        let mut levels = Vec::with_capacity(n_levels);
        for l in 0..n_levels {
            let (lo, hi) = decomp.range(l, rank);
            let m = factors[l];
            let grid = assignment.grid(l);
            let init = spatial.transfer(&init0, grid)?;
            let zero = BlockState::zeros_like(&init);
            let c_first = (lo / m + 1) * m;
            let n_c = if c_first > hi { 0 } else { (hi - c_first) / m + 1 };
            let n_own = if l == 0 { 0 } else { hi - lo };
            levels.push(Level {
                times: &hierarchy.grids[l].points,
                m,
                spatial: grid,
                lo,
                hi,
                c_first,
                c_vals: vec![zero.clone(); n_c],
                u2: vec![zero.clone(); n_own],
                g: vec![zero; n_own],
                rhs_active: false,
                init,
                elapsed: Duration::ZERO,
            });
        }

        let n_fine = hierarchy.grids[0].len();
        let fine = &mut levels[0];
        match &opts.initial_guess {
            InitialGuess::Initial => fine.c_vals.iter_mut().for_each(|c| *c = init0.clone()),
            InitialGuess::Zero => {}
            InitialGuess::Random(seed) => {
                for c in fine.c_points() {
                    let mut rng = ChaCha8Rng::seed_from_u64(*seed);
                    rng.set_stream(c as u64);
                    let mut s = BlockState::zeros_like(&init0);
                    s.field.iter_mut().chain(s.scalars.iter_mut()).for_each(|v| *v = T::lit(rng.gen_range(-1.0..=1.0)));
                    let k = fine.c_slot(c);
                    fine.c_vals[k] = s;
                }
            }
            InitialGuess::Provided(u) => {
                if u.start != 0 || u.len() != n_fine || u.states.iter().any(|s| !s.same_shape(&init0)) {
                    return Err(SetupError::InitialGuess { expected: n_fine });
                }
                for c in fine.c_points() {
                    let k = fine.c_slot(c);
                    fine.c_vals[k] = u.states[c].clone();
                }
            }
        }

        let record = SolverRun {
            workers: comm.size(),
            levels: n_levels,
            iterations: 0,
            initial_residual: f64::NAN,
            residual_history: Vec::new(),
            qoi_history: Vec::new(),
            iteration_times: Vec::new(),
            level_times: Vec::new(),
            setup_s: 0.0,
            solve_s: 0.0,
            newton_iterations: 0,
            storage: StorageReport::default(),
            outcome: RunOutcome::MaxIterations,
        };
        Ok(Self {
            ctx: Ctx {
                problem,
                comm,
                decomp,
                rank,
                forcing: opts.forcing,
                weights: problem.loss_weights(0),
                newton: 0,
            },
            levels,
            opts,
            n_fine,
            record,
        })
    }

    fn last(&self) -> usize {
        self.levels.len() - 1
    }

    fn run(&mut self, setup_start: Instant) -> Result<Option<SpaceTimeVector<T>>, SolveError> {
        let storage = self.storage_report()?;
        self.record.storage = storage;

        if self.opts.cycle.nested_iterations && self.levels.len() > 1 {
            self.nested()?;
        }
        self.record.setup_s = setup_start.elapsed().as_secs_f64();

        let solve_start = Instant::now();
        if self.levels.len() == 1 {
            self.coarse_solve(0, CoarseAction::Keep)?;
            let out = self.sweep(0, Mode::Restrict { measure: true })?;
            let res = self.ctx.comm.global_norm(out.sumsq)?;
            self.record.initial_residual = res;
            self.record.iterations = 1;
            self.record.residual_history.push(res);
            self.record.qoi_history.push(0.0);
            self.record.iteration_times.push(solve_start.elapsed().as_secs_f64());
            self.record.outcome = RunOutcome::Converged;
        } else {
            self.iterate(solve_start)?;
        }

        let local = self.materialize()?;
        let gathered = self.ctx.comm.gather_states(tags::tag(tags::OUTPUT, 0), local)?;
        let newton = self.ctx.comm.allreduce(vec![self.ctx.newton as f64], |a, b| a + b)?;
        self.record.newton_iterations = newton[0] as u64;
        self.record.solve_s = solve_start.elapsed().as_secs_f64();

        Ok(gathered.map(|blocks| {
            let mut states = Vec::with_capacity(self.n_fine);
            states.push(self.levels[0].init.clone());
            states.extend(blocks.into_iter().flatten());
            SpaceTimeVector::new(0, states)
        }))
    }

    fn iterate(&mut self, solve_start: Instant) -> Result<(), SolveError> {
        let gamma = self.opts.cycle.gamma;
        let stopping = self.opts.stopping;
        let first = if gamma >= 1 {
            Mode::Relax { measure: true }
        } else {
            Mode::Restrict { measure: true }
        };
        let mut previous: Option<Vec<f64>> = None;
        let mut k = 0;
        loop {
            let out = match first {
                Mode::Relax { .. } => self.sweep(0, first)?,
                _ => self.sweep_restrict(0, first)?,
            };
            let res = self.ctx.comm.global_norm(out.sumsq)?;
            let qoi = match &previous {
                Some(p) => Some(self.ctx.comm.global_max(qoi_change(p, &out.losses))?),
                None => None,
            };
            previous = Some(out.losses);
            if k == 0 {
                self.record.initial_residual = res;
            } else {
                self.record.iterations = k;
                self.record.residual_history.push(res);
                self.record.qoi_history.push(qoi.unwrap_or(f64::NAN));
                self.record.iteration_times.push(solve_start.elapsed().as_secs_f64());
            }
            if stopping.is_met(k, res, qoi) {
                self.record.outcome = RunOutcome::Converged;
                return Ok(());
            }
            if k >= self.opts.cycle.max_iters {
                self.record.outcome = if stopping.kind == StoppingKind::FixedIterations {
                    RunOutcome::Converged
                } else {
                    RunOutcome::MaxIterations
                };
                return Ok(());
            }
            self.relax(0, true)?;
            match self.opts.cycle.cycle_type {
                CycleType::F => self.f_cycle(1)?,
                _ => self.v_cycle(1)?,
            }
            self.correct_from(1)?;
            k += 1;
        }
    }

    /// Coarsest-first initial guess with the nested forcing.
    fn nested(&mut self) -> Result<(), SolveError> {
        self.ctx.forcing = self.opts.nested_forcing;
        let last = self.last();
        for l in 1..=last {
            self.levels[l].rhs_active = false;
        }
        self.coarse_solve(last, CoarseAction::Seed)?;
        for l in (1..last).rev() {
            self.levels[l].rhs_active = false;
            self.v_cycle(l)?;
            self.sweep_fine(l, Mode::Seed)?;
        }
        self.ctx.forcing = self.opts.forcing;
        Ok(())
    }

    fn v_cycle(&mut self, l: usize) -> Result<(), SolveError> {
        if l == self.last() {
            return self.coarse_solve(l, CoarseAction::Correct);
        }
        self.relax(l, false)?;
        self.v_cycle(l + 1)?;
        self.correct_from(l + 1)
    }

    fn f_cycle(&mut self, l: usize) -> Result<(), SolveError> {
        if l == self.last() {
            return self.coarse_solve(l, CoarseAction::Correct);
        }
        self.relax(l, false)?;
        self.f_cycle(l + 1)?;
        self.correct_from(l + 1)?;
        self.v_cycle(l)
    }

    /// F(CF)^gamma relaxation on level `l` followed by restriction to `l + 1`.
    /// With `skip_first` the first sweep is assumed done already.
    fn relax(&mut self, l: usize, skip_first: bool) -> Result<(), SolveError> {
        let gamma = self.opts.cycle.gamma;
        for p in 0..gamma {
            if !(skip_first && p == 0) {
                self.sweep(l, Mode::Relax { measure: false })?;
            }
        }
        if !(skip_first && gamma == 0) {
            self.sweep_restrict(l, Mode::Restrict { measure: false })?;
        }
        self.finish_restriction(l + 1)
    }

    fn correct_from(&mut self, coarse: usize) -> Result<(), SolveError> {
        // the coarsest solve corrects the finer level itself
        if coarse == self.last() {
            return Ok(());
        }
        self.sweep_fine(coarse, Mode::Interpolate).map(drop)
    }

    fn sweep(&mut self, l: usize, mode: Mode) -> Result<SweepOut, SolveError> {
        let (ctx, levels) = (&mut self.ctx, &mut self.levels);
        sweep(ctx, l, &mut levels[l], mode, Target::None)
    }

    fn sweep_restrict(&mut self, l: usize, mode: Mode) -> Result<SweepOut, SolveError> {
        let (ctx, levels) = (&mut self.ctx, &mut self.levels);
        let (fine, coarse) = levels.split_at_mut(l + 1);
        sweep(ctx, l, &mut fine[l], mode, Target::Coarse(&mut coarse[0]))
    }

    fn sweep_fine(&mut self, l: usize, mode: Mode) -> Result<SweepOut, SolveError> {
        let (ctx, levels) = (&mut self.ctx, &mut self.levels);
        let (fine, coarse) = levels.split_at_mut(l);
        sweep(ctx, l, &mut coarse[0], mode, Target::Fine(&mut fine[l - 1]))
    }

    fn materialize(&mut self) -> Result<Vec<BlockState<T>>, SolveError> {
        let (ctx, levels) = (&mut self.ctx, &mut self.levels);
        let mut local = vec![BlockState::default(); levels[0].hi - levels[0].lo];
        sweep(ctx, 0, &mut levels[0], Mode::Materialize, Target::Output(&mut local))?;
        Ok(local)
    }

    /// Completes the coarse right-hand side `g = r + u2_i - Phi(u2_{i-1})`
    /// and starts the coarse iterate at the restricted values.
    fn finish_restriction(&mut self, l: usize) -> Result<(), SolveError> {
        let start = Instant::now();
        let (ctx, levels) = (&mut self.ctx, &mut self.levels);
        let lvl = &mut levels[l];
        lvl.rhs_active = true;
        if lvl.is_empty() {
            return Ok(());
        }
        let tag = tags::tag(tags::COARSE_BOUNDARY, l);
        if let Some(r) = ctx.decomp.right_peer(l, ctx.rank) {
            let last = lvl.u2.last().cloned().unwrap_or_default();
            ctx.comm.send_states(r, tag, vec![last])?;
        }
        let left = match ctx.decomp.left_peer(l, ctx.rank) {
            Some(w) => ctx
                .comm
                .recv_states(w, tag)?
                .pop()
                .ok_or_else(|| TransportError::Malformed("empty boundary".into()))?,
            None => lvl.init.clone(),
        };
        for s in 0..lvl.u2.len() {
            let i = lvl.lo + 1 + s;
            let prev = if s == 0 { &left } else { &lvl.u2[s - 1] };
            let phi = ctx.phi(l, lvl.times, i, prev)?;
            let mut g = lvl.u2[s].sub(&phi)?;
            g.add_assign(&lvl.g[s])?;
            lvl.g[s] = g;
        }
        for c in lvl.c_points() {
            let (k, s) = (lvl.c_slot(c), lvl.slot(c));
            lvl.c_vals[k] = lvl.u2[s].clone();
        }
        lvl.elapsed += start.elapsed();
        Ok(())
    }

    /// Sequential solve over the whole level on worker 0.
    fn coarse_solve(&mut self, l: usize, action: CoarseAction) -> Result<(), SolveError> {
        let start = Instant::now();
        let (ctx, levels) = (&mut self.ctx, &mut self.levels);
        let (finer, rest) = levels.split_at_mut(l);
        let lvl = &mut rest[0];
        let gathered = if lvl.rhs_active {
            ctx.comm.gather_states(tags::tag(tags::GATHER, l), lvl.g.clone())?
        } else {
            None
        };
        let blocks = if ctx.rank == 0 {
            let rhs: Option<Vec<BlockState<T>>> = gathered.map(|b| b.into_iter().flatten().collect());
            let n = lvl.times.len() - 1;
            let workers = ctx.decomp.workers();
            let mut blocks: Vec<Vec<BlockState<T>>> = vec![Vec::new(); workers];
            let mut v = lvl.init.clone();
            let mut owner = 0;
            for i in 1..=n {
                v = ctx.phi(l, lvl.times, i, &v)?;
                if let Some(g) = &rhs {
                    v.add_assign(&g[i - 1])?;
                }
                while ctx.decomp.range(l, owner).1 < i {
                    owner += 1;
                }
                blocks[owner].push(v.clone());
            }
            Some(blocks)
        } else {
            None
        };
        let v = ctx.comm.scatter_states(tags::tag(tags::SCATTER, l), blocks)?;
        for c in lvl.c_points() {
            let (k, s) = (lvl.c_slot(c), lvl.slot(c));
            lvl.c_vals[k] = v[s].clone();
        }
        if action != CoarseAction::Keep {
            let fine = &mut finer[l - 1];
            for (s, vi) in v.iter().enumerate() {
                let i = lvl.lo + 1 + s;
                let k = fine.c_slot(i * fine.m);
                match action {
                    CoarseAction::Correct => {
                        let e = ctx.transfer(&vi.sub(&lvl.u2[s])?, fine.spatial)?;
                        fine.c_vals[k].add_assign(&e)?;
                    }
                    _ => fine.c_vals[k] = ctx.transfer(vi, fine.spatial)?,
                }
            }
        }
        lvl.elapsed += start.elapsed();
        Ok(())
    }

    fn storage_report(&mut self) -> Result<StorageReport, SolveError> {
        let n_scalars = self.ctx.problem.n_scalars();
        let spatial = self.ctx.problem.spatial();
        let mut local = vec![0.0; 2];
        let mut per_level = Vec::new();
        for lvl in &self.levels {
            let states = lvl.stored_states();
            local[0] += states as f64;
            local[1] += (states * (spatial.size(lvl.spatial) + n_scalars)) as f64;
            per_level.push(states as f64);
        }
        local.extend(per_level);
        let max = self.ctx.comm.allreduce(local, f64::max)?;
        Ok(StorageReport {
            states: max[0] as usize,
            units: max[1] as usize,
            per_level: max[2..].iter().map(|&v| v as usize).collect(),
        })
    }
}

fn sweep<T: Real, I: TimeIntegrator<T> + ?Sized, Tr: Transport<T>>(
    ctx: &mut Ctx<'_, T, I, Tr>,
    l: usize,
    lvl: &mut Level<'_, T>,
    mode: Mode,
    mut target: Target<'_, '_, T>,
) -> Result<SweepOut, SolveError> {
    let start = Instant::now();
    let measure = matches!(mode, Mode::Relax { measure: true } | Mode::Restrict { measure: true });
    let mut out = SweepOut {
        sumsq: 0.0,
        losses: if measure { vec![0.0; lvl.c_vals.len()] } else { Vec::new() },
    };
    if lvl.is_empty() {
        return Ok(out);
    }
    let (lo, hi, m) = (lvl.lo, lvl.hi, lvl.m);
    let left = ctx.decomp.left_peer(l, ctx.rank);
    let right = ctx.decomp.right_peer(l, ctx.rank);
    let cs = lvl.c_points();

    if let Some(&c_last) = cs.last() {
        let mut cur = lvl.c_vals[cs.len() - 1].clone();
        visit(ctx, lvl, mode, &mut target, c_last, &cur)?;
        for i in c_last + 1..=hi {
            cur = ctx.step(l, lvl, i, &cur)?;
            visit(ctx, lvl, mode, &mut target, i, &cur)?;
        }
        if let Some(r) = right {
            ctx.comm.send_boundary(r, l, cur)?;
        }
        for k in (0..cs.len() - 1).rev() {
            let c = cs[k];
            let mut cur = lvl.c_vals[k].clone();
            visit(ctx, lvl, mode, &mut target, c, &cur)?;
            for i in c + 1..c + m {
                cur = ctx.step(l, lvl, i, &cur)?;
                visit(ctx, lvl, mode, &mut target, i, &cur)?;
            }
            at_c_point(ctx, l, lvl, mode, &mut target, &mut out, c + m, &cur)?;
        }
    }

    let mut cur = match left {
        Some(w) => ctx.comm.recv_boundary(w, l)?,
        None => lvl.init.clone(),
    };
    let end = cs.first().copied().unwrap_or(hi + 1);
    for i in lo + 1..end {
        cur = ctx.step(l, lvl, i, &cur)?;
        visit(ctx, lvl, mode, &mut target, i, &cur)?;
    }
    match (cs.first(), right) {
        (Some(&c1), _) => at_c_point(ctx, l, lvl, mode, &mut target, &mut out, c1, &cur)?,
        (None, Some(r)) => ctx.comm.send_boundary(r, l, cur)?,
        (None, None) => {}
    }
    lvl.elapsed += start.elapsed();
    Ok(out)
}

/// Per-point work of the transfer sweeps.
fn visit<T: Real, I: TimeIntegrator<T> + ?Sized, Tr: Transport<T>>(
    ctx: &Ctx<'_, T, I, Tr>,
    lvl: &Level<'_, T>,
    mode: Mode,
    target: &mut Target<'_, '_, T>,
    i: usize,
    v: &BlockState<T>,
) -> Result<(), SolveError> {
    match (mode, target) {
        (Mode::Interpolate, Target::Fine(f)) => {
            let e = ctx.transfer(&v.sub(&lvl.u2[lvl.slot(i)])?, f.spatial)?;
            let k = f.c_slot(i * f.m);
            f.c_vals[k].add_assign(&e)?;
        }
        (Mode::Seed, Target::Fine(f)) => {
            let k = f.c_slot(i * f.m);
            f.c_vals[k] = ctx.transfer(v, f.spatial)?;
        }
        (Mode::Materialize, Target::Output(o)) => o[lvl.slot(i)] = v.clone(),
        _ => {}
    }
    Ok(())
}

/// Work at C-point `c`, given the F-relaxed value `prev` at `c - 1`.
#[allow(clippy::too_many_arguments)]
fn at_c_point<T: Real, I: TimeIntegrator<T> + ?Sized, Tr: Transport<T>>(
    ctx: &mut Ctx<'_, T, I, Tr>,
    l: usize,
    lvl: &mut Level<'_, T>,
    mode: Mode,
    target: &mut Target<'_, '_, T>,
    out: &mut SweepOut,
    c: usize,
    prev: &BlockState<T>,
) -> Result<(), SolveError> {
    let k = lvl.c_slot(c);
    match mode {
        Mode::Relax { measure } => {
            let new = ctx.step(l, lvl, c, prev)?;
            if measure {
                out.sumsq += new.sub(&lvl.c_vals[k])?.sum_squares().as_f64();
                out.losses[k] = loss(ctx, lvl, c, prev, &lvl.c_vals[k]);
            }
            lvl.c_vals[k] = new;
        }
        Mode::Restrict { measure } => {
            let r = ctx.step(l, lvl, c, prev)?.sub(&lvl.c_vals[k])?;
            if measure {
                out.sumsq += r.sum_squares().as_f64();
                out.losses[k] = loss(ctx, lvl, c, prev, &lvl.c_vals[k]);
            }
            if let Target::Coarse(coarse) = target {
                let s = coarse.slot(c / lvl.m);
                coarse.u2[s] = ctx.transfer(&lvl.c_vals[k], coarse.spatial)?;
                coarse.g[s] = ctx.transfer(&r, coarse.spatial)?;
            }
        }
        Mode::Interpolate | Mode::Seed | Mode::Materialize => {}
    }
    Ok(())
}

fn loss<T: Real, I: TimeIntegrator<T> + ?Sized, Tr>(
    ctx: &Ctx<'_, T, I, Tr>,
    lvl: &Level<'_, T>,
    c: usize,
    prev: &BlockState<T>,
    cur: &BlockState<T>,
) -> f64 {
    let dt = lvl.times[c] - lvl.times[c - 1];
    joule_loss(prev, cur, dt, &ctx.weights).as_f64()
}
