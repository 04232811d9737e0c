//! Flat `section.key = value` experiment files.
//!
//! Lines starting with `#` are comments. Every key must be known. Variants
//! for `compare` are written as `variant.<name>.<section>.<key> = value` and
//! override the base settings in the order they first appear.

use std::fmt::Display;
use std::path::PathBuf;
use std::str::FromStr;

use mgrit_core::excitation::PwmSource;
use mgrit_core::integrators::{
    FieldParams, LinearDiffusionProblem, ModelProblem, MotionParams, NewtonControls, NonlinearSaturationProblem,
    Reluctivity, ScalarOde, SurrogateMachineProblem,
};
use mgrit_core::mgrit::{CycleSpec, CycleType, InitialGuess, MgritOptions, StoppingCriterion, StoppingKind};
use mgrit_core::spatial::SpatialStrategy;
use mgrit_core::time_grid::{build_uniform_grid, plan_coarsening, TimeHierarchy};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("line {line}: expected `key = value`")]
    Syntax { line: usize },
    #[error("line {line}: unknown key `{key}`")]
    UnknownKey { line: usize, key: String },
    #[error("{key}: cannot parse `{value}`")]
    Value { key: String, value: String },
    #[error("{field}: {reason}")]
    Invalid { field: String, reason: String },
    #[error("compare.reference names unknown variant `{0}`")]
    UnknownReference(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProblemKind {
    Linear,
    Nonlinear,
    Surrogate,
    Scalar,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HierarchyMode {
    /// Same factor between every pair of levels.
    Uniform,
    /// First factor from the worker count, then `factor` on further levels.
    Planned,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GuessKind {
    Initial,
    Zero,
    Random,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TransportKind {
    Threads,
    Tcp,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub problem: ProblemKind,
    pub field: FieldParams,
    pub diffusivity: f64,
    pub curve: Reluctivity,
    pub newton: NewtonControls,
    pub motion: MotionParams,
    pub lambda: f64,
    pub u0: f64,
    pub t0: f64,
    pub t_final: f64,
    pub n_steps: usize,
    pub hierarchy_mode: HierarchyMode,
    pub levels: usize,
    pub factor: usize,
    /// Worker count used by the planned hierarchy; 0 means the run's own.
    pub plan_workers: usize,
    pub coarsest_factor: usize,
    pub cycle: CycleSpec,
    pub stopping: StoppingCriterion,
    pub guess: GuessKind,
    pub workers: usize,
    pub seed: u64,
    pub transport: TransportKind,
    pub out_dir: PathBuf,
    pub reference: Option<String>,
    pub scale_workers: Vec<usize>,
    pub variants: Vec<Variant>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Variant {
    pub name: String,
    pub overrides: Vec<(String, String)>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            problem: ProblemKind::Linear,
            field: FieldParams::default(),
            diffusivity: 1.0,
            curve: Reluctivity::default(),
            newton: NewtonControls::default(),
            motion: MotionParams::default(),
            lambda: -1.0,
            u0: 1.0,
            t0: 0.0,
            t_final: 0.02,
            n_steps: 256,
            hierarchy_mode: HierarchyMode::Uniform,
            levels: 5,
            factor: 2,
            plan_workers: 0,
            coarsest_factor: 2,
            cycle: CycleSpec::default(),
            stopping: StoppingCriterion::residual(1e-8),
            guess: GuessKind::Initial,
            workers: 1,
            seed: 0,
            transport: TransportKind::Threads,
            out_dir: PathBuf::from("out"),
            reference: None,
            scale_workers: vec![1, 2, 4],
            variants: Vec::new(),
        }
    }
}

fn parse<V: FromStr>(key: &str, value: &str) -> Result<V, ConfigError> {
    value.parse().map_err(|_| ConfigError::Value {
        key: key.to_string(),
        value: value.to_string(),
    })
}

fn parse_enum<V: Copy>(key: &str, value: &str, table: &[(&str, V)]) -> Result<V, ConfigError> {
    table
        .iter()
        .find(|(name, _)| *name == value)
        .map(|(_, v)| *v)
        .ok_or_else(|| ConfigError::Value {
            key: key.to_string(),
            value: value.to_string(),
        })
}

fn enum_name<V: PartialEq>(v: V, table: &[(&'static str, V)]) -> &'static str {
    table.iter().find(|(_, x)| *x == v).map(|(n, _)| *n).unwrap_or("?")
}

const PROBLEMS: &[(&str, ProblemKind)] = &[
    ("linear", ProblemKind::Linear),
    ("nonlinear", ProblemKind::Nonlinear),
    ("surrogate", ProblemKind::Surrogate),
    ("scalar", ProblemKind::Scalar),
];
const MODES: &[(&str, HierarchyMode)] = &[("uniform", HierarchyMode::Uniform), ("planned", HierarchyMode::Planned)];
const CYCLES: &[(&str, CycleType)] = &[("v", CycleType::V), ("f", CycleType::F), ("two-level", CycleType::TwoLevel)];
const STRATEGIES: &[(&str, SpatialStrategy)] = &[
    ("none", SpatialStrategy::None),
    ("direct", SpatialStrategy::Direct),
    ("delayed", SpatialStrategy::Delayed),
];
const STOPPING: &[(&str, StoppingKind)] = &[
    ("residual", StoppingKind::ResidualNorm),
    ("qoi", StoppingKind::QoiChange),
    ("fixed", StoppingKind::FixedIterations),
];
const GUESSES: &[(&str, GuessKind)] = &[
    ("initial", GuessKind::Initial),
    ("zero", GuessKind::Zero),
    ("random", GuessKind::Random),
];
const TRANSPORTS: &[(&str, TransportKind)] = &[("threads", TransportKind::Threads), ("tcp", TransportKind::Tcp)];

pub fn strategy_name(s: SpatialStrategy) -> &'static str {
    enum_name(s, STRATEGIES)
}

fn join<V: Display>(v: &[V]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")
}

impl ExperimentConfig {
    /// Parses a config file's text on top of the defaults.
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut cfg = Self::default();
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let (key, value) = content.split_once('=').ok_or(ConfigError::Syntax { line })?;
            let (key, value) = (key.trim(), value.trim());
            if key.is_empty() {
                return Err(ConfigError::Syntax { line });
            }
            cfg.apply(key, value).map_err(|e| match e {
                ConfigError::UnknownKey { key, .. } => ConfigError::UnknownKey { line, key },
                e => e,
            })?;
        }
        if let Some(r) = &cfg.reference {
            if !cfg.variants.iter().any(|v| &v.name == r) {
                return Err(ConfigError::UnknownReference(r.clone()));
            }
        }
        Ok(cfg)
    }

    fn apply(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        if let Some(rest) = key.strip_prefix("variant.") {
            let (name, sub) = rest.split_once('.').ok_or_else(|| ConfigError::UnknownKey {
                line: 0,
                key: key.to_string(),
            })?;
            // check the override against a scratch copy so typos fail early
            self.clone().set(sub, value)?;
            let pair = (sub.to_string(), value.to_string());
            match self.variants.iter_mut().find(|v| v.name == name) {
                Some(v) => v.overrides.push(pair),
                None => self.variants.push(Variant {
                    name: name.to_string(),
                    overrides: vec![pair],
                }),
            }
            return Ok(());
        }
        match key {
            "compare.reference" => self.reference = Some(value.to_string()),
            "scale.workers" => {
                self.scale_workers = value
                    .split(',')
                    .map(|w| parse(key, w.trim()))
                    .collect::<Result<_, _>>()?
            }
            _ => self.set(key, value)?,
        }
        Ok(())
    }

    /// Sets one base key (not a variant, reference or scale key).
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        match key {
            "problem.kind" => self.problem = parse_enum(key, value, PROBLEMS)?,
            "problem.n_x" => self.field.n_x = parse(key, value)?,
            "problem.spatial_grids" => self.field.n_grids = parse(key, value)?,
            "problem.sigma" => self.field.sigma = parse(key, value)?,
            "problem.diffusivity" => self.diffusivity = parse(key, value)?,
            "problem.amplitude" => self.field.amplitude = parse(key, value)?,
            "problem.initial_amplitude" => self.field.initial_amplitude = parse(key, value)?,
            "problem.lambda" => self.lambda = parse(key, value)?,
            "problem.u0" => self.u0 = parse(key, value)?,
            "reluctivity.k1" => self.curve.k1 = parse(key, value)?,
            "reluctivity.k2" => self.curve.k2 = parse(key, value)?,
            "reluctivity.k3" => self.curve.k3 = parse(key, value)?,
            "newton.max_iters" => self.newton.max_iters = parse(key, value)?,
            "newton.tolerance" => self.newton.tolerance = parse(key, value)?,
            "newton.damping" => self.newton.damping = parse(key, value)?,
            "motion.inertia" => self.motion.inertia = parse(key, value)?,
            "motion.friction" => self.motion.friction = parse(key, value)?,
            "motion.torque_gain" => self.motion.torque_gain = parse(key, value)?,
            "motion.theta0" => self.motion.theta0 = parse(key, value)?,
            "motion.omega0" => self.motion.omega0 = parse(key, value)?,
            "excitation.period" => self.field.source.period = parse(key, value)?,
            "excitation.pulses" => self.field.source.pulses = parse(key, value)?,
            "excitation.modulation" => self.field.source.modulation = parse(key, value)?,
            "excitation.ramp" => self.field.source.ramp_enabled = parse(key, value)?,
            "time.t0" => self.t0 = parse(key, value)?,
            "time.t_final" => self.t_final = parse(key, value)?,
            "time.n_steps" => self.n_steps = parse(key, value)?,
            "hierarchy.mode" => self.hierarchy_mode = parse_enum(key, value, MODES)?,
            "hierarchy.levels" => self.levels = parse(key, value)?,
            "hierarchy.factor" => self.factor = parse(key, value)?,
            "hierarchy.plan_workers" => self.plan_workers = parse(key, value)?,
            "hierarchy.coarsest_factor" => self.coarsest_factor = parse(key, value)?,
            "cycle.type" => self.cycle.cycle_type = parse_enum(key, value, CYCLES)?,
            "cycle.gamma" => self.cycle.gamma = parse(key, value)?,
            "cycle.max_iters" => self.cycle.max_iters = parse(key, value)?,
            "cycle.spatial_coarsening" => self.cycle.spatial_strategy = parse_enum(key, value, STRATEGIES)?,
            "cycle.nested" => self.cycle.nested_iterations = parse(key, value)?,
            "stopping.kind" => self.stopping.kind = parse_enum(key, value, STOPPING)?,
            "stopping.tolerance" => self.stopping.tolerance = parse(key, value)?,
            "guess.kind" => self.guess = parse_enum(key, value, GUESSES)?,
            "run.workers" => self.workers = parse(key, value)?,
            "run.seed" => self.seed = parse(key, value)?,
            "runtime.transport" => self.transport = parse_enum(key, value, TRANSPORTS)?,
            "output.dir" => self.out_dir = PathBuf::from(value),
            _ => {
                return Err(ConfigError::UnknownKey {
                    line: 0,
                    key: key.to_string(),
                })
            }
        }
        Ok(())
    }

    fn base_entries(&self) -> Vec<(&'static str, String)> {
        let f = &self.field;
        vec![
            ("problem.kind", enum_name(self.problem, PROBLEMS).into()),
            ("problem.n_x", f.n_x.to_string()),
            ("problem.spatial_grids", f.n_grids.to_string()),
            ("problem.sigma", f.sigma.to_string()),
            ("problem.diffusivity", self.diffusivity.to_string()),
            ("problem.amplitude", f.amplitude.to_string()),
            ("problem.initial_amplitude", f.initial_amplitude.to_string()),
            ("problem.lambda", self.lambda.to_string()),
            ("problem.u0", self.u0.to_string()),
            ("reluctivity.k1", self.curve.k1.to_string()),
            ("reluctivity.k2", self.curve.k2.to_string()),
            ("reluctivity.k3", self.curve.k3.to_string()),
            ("newton.max_iters", self.newton.max_iters.to_string()),
            ("newton.tolerance", self.newton.tolerance.to_string()),
            ("newton.damping", self.newton.damping.to_string()),
            ("motion.inertia", self.motion.inertia.to_string()),
            ("motion.friction", self.motion.friction.to_string()),
            ("motion.torque_gain", self.motion.torque_gain.to_string()),
            ("motion.theta0", self.motion.theta0.to_string()),
            ("motion.omega0", self.motion.omega0.to_string()),
            ("excitation.period", f.source.period.to_string()),
            ("excitation.pulses", f.source.pulses.to_string()),
            ("excitation.modulation", f.source.modulation.to_string()),
            ("excitation.ramp", f.source.ramp_enabled.to_string()),
            ("time.t0", self.t0.to_string()),
            ("time.t_final", self.t_final.to_string()),
            ("time.n_steps", self.n_steps.to_string()),
            ("hierarchy.mode", enum_name(self.hierarchy_mode, MODES).into()),
            ("hierarchy.levels", self.levels.to_string()),
            ("hierarchy.factor", self.factor.to_string()),
            ("hierarchy.plan_workers", self.plan_workers.to_string()),
            ("hierarchy.coarsest_factor", self.coarsest_factor.to_string()),
            ("cycle.type", enum_name(self.cycle.cycle_type, CYCLES).into()),
            ("cycle.gamma", self.cycle.gamma.to_string()),
            ("cycle.max_iters", self.cycle.max_iters.to_string()),
            ("cycle.spatial_coarsening", strategy_name(self.cycle.spatial_strategy).into()),
            ("cycle.nested", self.cycle.nested_iterations.to_string()),
            ("stopping.kind", enum_name(self.stopping.kind, STOPPING).into()),
            ("stopping.tolerance", self.stopping.tolerance.to_string()),
            ("guess.kind", enum_name(self.guess, GUESSES).into()),
            ("run.workers", self.workers.to_string()),
            ("run.seed", self.seed.to_string()),
            ("runtime.transport", enum_name(self.transport, TRANSPORTS).into()),
            ("output.dir", self.out_dir.display().to_string()),
        ]
    }

    /// Text that [`Self::parse`] turns back into this config.
    pub fn serialize(&self) -> String {
        let mut out = String::new();
        for (k, v) in self.base_entries() {
            out += &format!("{k} = {v}\n");
        }
        out += &format!("scale.workers = {}\n", join(&self.scale_workers));
        for v in &self.variants {
            for (k, val) in &v.overrides {
                out += &format!("variant.{}.{k} = {val}\n", v.name);
            }
        }
        if let Some(r) = &self.reference {
            out += &format!("compare.reference = {r}\n");
        }
        out
    }

    /// Base settings with one variant's overrides applied.
    pub fn for_variant(&self, variant: &Variant) -> Result<Self, ConfigError> {
        let mut cfg = self.clone();
        for (k, v) in &variant.overrides {
            cfg.set(k, v)?;
        }
        cfg.variants.clear();
        cfg.reference = None;
        Ok(cfg)
    }

    fn invalid(field: &str, reason: impl Into<String>) -> ConfigError {
        ConfigError::Invalid {
            field: field.to_string(),
            reason: reason.into(),
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let positive = |field: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Self::invalid(field, "must be positive"))
            }
        };
        if self.field.n_x == 0 {
            return Err(Self::invalid("problem.n_x", "must be at least 1"));
        }
        if self.field.n_grids == 0 {
            return Err(Self::invalid("problem.spatial_grids", "must be at least 1"));
        }
        positive("problem.sigma", self.field.sigma)?;
        positive("problem.diffusivity", self.diffusivity)?;
        if !self.curve.is_valid() {
            return Err(Self::invalid("reluctivity.k1", "k1, k3 must be non-negative and not both zero"));
        }
        positive("newton.tolerance", self.newton.tolerance)?;
        if !(self.newton.damping > 0.0 && self.newton.damping <= 1.0) {
            return Err(Self::invalid("newton.damping", "must lie in (0, 1]"));
        }
        positive("motion.inertia", self.motion.inertia)?;
        positive("excitation.period", self.field.source.period)?;
        if self.field.source.pulses == 0 {
            return Err(Self::invalid("excitation.pulses", "must be at least 1"));
        }
        if !(self.t_final > self.t0) {
            return Err(Self::invalid("time.t_final", "must exceed time.t0"));
        }
        if self.n_steps == 0 {
            return Err(Self::invalid("time.n_steps", "must be at least 1"));
        }
        if self.levels == 0 {
            return Err(Self::invalid("hierarchy.levels", "must be at least 1"));
        }
        if self.factor < 2 {
            return Err(Self::invalid("hierarchy.factor", "must be at least 2"));
        }
        if self.coarsest_factor < 2 {
            return Err(Self::invalid("hierarchy.coarsest_factor", "must be at least 2"));
        }
        if self.cycle.max_iters == 0 && self.stopping.kind != StoppingKind::FixedIterations {
            return Err(Self::invalid("cycle.max_iters", "must be at least 1"));
        }
        if self.stopping.kind != StoppingKind::FixedIterations {
            positive("stopping.tolerance", self.stopping.tolerance)?;
        }
        if self.workers == 0 {
            return Err(Self::invalid("run.workers", "must be at least 1"));
        }
        if self.scale_workers.is_empty() || self.scale_workers.contains(&0) {
            return Err(Self::invalid("scale.workers", "must list positive worker counts"));
        }
        Ok(())
    }

    pub fn build_problem(&self) -> Result<ModelProblem<f64>, ConfigError> {
        let spatial_err = |e: mgrit_core::spatial::SpatialError| Self::invalid("problem.spatial_grids", e.to_string());
        let field = self.field.clone();
        Ok(match self.problem {
            ProblemKind::Linear => {
                ModelProblem::Linear(LinearDiffusionProblem::new(field, self.diffusivity).map_err(spatial_err)?)
            }
            ProblemKind::Nonlinear => ModelProblem::Nonlinear(
                NonlinearSaturationProblem::new(field, self.curve, self.newton).map_err(spatial_err)?,
            ),
            ProblemKind::Surrogate => ModelProblem::Surrogate(
                SurrogateMachineProblem::new(field, self.curve, self.newton, self.motion).map_err(spatial_err)?,
            ),
            ProblemKind::Scalar => ModelProblem::Scalar(ScalarOde::new(self.lambda, self.u0)),
        })
    }

    pub fn build_hierarchy(&self, workers: usize) -> Result<TimeHierarchy<f64>, ConfigError> {
        let fine = build_uniform_grid(self.t0, self.t_final, self.n_steps)
            .map_err(|e| Self::invalid("time.n_steps", e.to_string()))?;
        let factors = match self.hierarchy_mode {
            HierarchyMode::Uniform => vec![self.factor; self.levels - 1],
            HierarchyMode::Planned => {
                let p = if self.plan_workers == 0 { workers } else { self.plan_workers };
                plan_coarsening(self.n_steps, p, self.levels, self.factor)
            }
        };
        TimeHierarchy::new(fine, &factors, self.coarsest_factor)
            .map_err(|e| Self::invalid("hierarchy.levels", e.to_string()))
    }

    pub fn mgrit_options(&self) -> MgritOptions<f64> {
        MgritOptions {
            cycle: self.cycle.clone(),
            stopping: self.stopping,
            initial_guess: match self.guess {
                GuessKind::Initial => InitialGuess::Initial,
                GuessKind::Zero => InitialGuess::Zero,
                GuessKind::Random => InitialGuess::Random(self.seed),
            },
            ..MgritOptions::default()
        }
    }

    pub fn source(&self) -> &PwmSource {
        &self.field.source
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip() {
        let cfg = ExperimentConfig::default();
        assert_eq!(ExperimentConfig::parse(&cfg.serialize()).unwrap(), cfg);
    }

    #[test]
    fn comments_and_blank_lines() {
        let cfg = ExperimentConfig::parse("# header\n\ncycle.gamma = 0 # F-relaxation\n").unwrap();
        assert_eq!(cfg.cycle.gamma, 0);
    }

    #[test]
    fn unknown_keys_name_the_line() {
        let err = ExperimentConfig::parse("cycle.gamma = 1\ncycle.gama = 0\n").unwrap_err();
        assert_eq!(
            err,
            ConfigError::UnknownKey {
                line: 2,
                key: "cycle.gama".into()
            }
        );
        assert!(ExperimentConfig::parse("variant.a.cycle.gama = 0\n").is_err());
        assert!(ExperimentConfig::parse("just text\n").is_err());
    }

    #[test]
    fn bad_values_name_the_key() {
        let err = ExperimentConfig::parse("cycle.type = w\n").unwrap_err();
        assert!(err.to_string().starts_with("cycle.type"));
        let cfg = ExperimentConfig::parse("time.t_final = -1\n").unwrap();
        assert!(cfg.validate().unwrap_err().to_string().starts_with("time.t_final"));
    }

    #[test]
    fn variants_keep_order_and_apply() {
        let text = "variant.b.cycle.gamma = 0\nvariant.a.cycle.type = f\nvariant.b.cycle.spatial_coarsening = direct\ncompare.reference = a\n";
        let cfg = ExperimentConfig::parse(text).unwrap();
        let names: Vec<_> = cfg.variants.iter().map(|v| v.name.as_str()).collect();
        assert_eq!(names, ["b", "a"]);
        let b = cfg.for_variant(&cfg.variants[0]).unwrap();
        assert_eq!(b.cycle.gamma, 0);
        assert_eq!(b.cycle.spatial_strategy, SpatialStrategy::Direct);
        assert_eq!(ExperimentConfig::parse(&cfg.serialize()).unwrap(), cfg);
        assert!(matches!(
            ExperimentConfig::parse("compare.reference = x\n"),
            Err(ConfigError::UnknownReference(_))
        ));
    }

    #[test]
    fn planned_hierarchy_follows_workers() {
        let cfg = ExperimentConfig::parse("hierarchy.mode = planned\ntime.n_steps = 128\n").unwrap();
        assert_eq!(cfg.build_hierarchy(16).unwrap().factors, vec![8, 2, 2, 2]);
        assert_eq!(cfg.build_hierarchy(1).unwrap().factors, vec![128]);
    }
}
