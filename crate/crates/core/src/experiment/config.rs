//! Experiment configuration in TOML.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::problem::{NoiseCoupling, NoiseModel};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Family {
    QcqpConvex,
    QcqpNonconvex,
    #[serde(rename = "custom-1d")]
    Custom1d,
}

impl Family {
    pub fn name(self) -> &'static str {
        match self {
            Family::QcqpConvex => "qcqp-convex",
            Family::QcqpNonconvex => "qcqp-nonconvex",
            Family::Custom1d => "custom-1d",
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NoiseKindSpec {
    None,
    #[default]
    Gaussian,
    StudentT,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NoiseSpec {
    pub kind: NoiseKindSpec,
    /// Standard deviation (Gaussian) or scale (Student-t).
    pub sigma: f64,
    pub dof: f64,
    pub coupling: NoiseCoupling,
}

impl Default for NoiseSpec {
    fn default() -> Self {
        Self {
            kind: NoiseKindSpec::Gaussian,
            sigma: 0.1,
            dof: 5.0,
            coupling: NoiseCoupling::Independent,
        }
    }
}

impl NoiseSpec {
    pub fn model(&self) -> Result<NoiseModel> {
        match self.kind {
            NoiseKindSpec::None => Ok(NoiseModel::none()),
            NoiseKindSpec::Gaussian => NoiseModel::gaussian(self.sigma, self.coupling),
            NoiseKindSpec::StudentT => NoiseModel::student_t(self.dof, self.sigma, self.coupling),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ParamMode {
    #[default]
    Theorem1,
    Explicit,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SmoothingSpec {
    pub mode: ParamMode,
    /// Objective radius in explicit mode.
    pub nu0: f64,
    /// Radius of every constraint in explicit mode.
    pub nu: f64,
    /// Runs the experiment once per value with `nu0 = nu = value`.
    pub sweep: Vec<f64>,
}

impl Default for SmoothingSpec {
    fn default() -> Self {
        Self {
            mode: ParamMode::Theorem1,
            nu0: 0.05,
            nu: 0.05,
            sweep: Vec::new(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScheduleSpec {
    pub mode: ParamMode,
    pub eta: f64,
    pub tau: f64,
    /// Stand-in for the optimal dual norm in theorem mode.
    pub dual_norm_bound: f64,
    /// Multiplies `eta` and `tau` in theorem mode.
    pub scale: f64,
}

impl Default for ScheduleSpec {
    fn default() -> Self {
        Self {
            mode: ParamMode::Theorem1,
            eta: 100.0,
            tau: 10.0,
            dual_norm_bound: 1.0,
            scale: 1.0,
        }
    }
}

fn default_n() -> usize {
    10
}
fn default_m() -> usize {
    1
}
fn default_iterations() -> usize {
    1000
}
fn one() -> usize {
    1
}
fn default_checkpoints() -> usize {
    50
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub family: Family,
    #[serde(default = "default_n")]
    pub n: usize,
    #[serde(default = "default_m")]
    pub m: usize,
    /// Solver iterations `T` (inner iterations for the nonconvex family).
    #[serde(default = "default_iterations")]
    pub iterations: usize,
    /// Outer iterations `K` of the nonconvex family.
    #[serde(default = "one")]
    pub outer_iterations: usize,
    #[serde(default = "one")]
    pub trials: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_checkpoints")]
    pub checkpoints: usize,
    /// One instance for all trials instead of one per trial.
    #[serde(default)]
    pub shared_instance: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<String>,
    #[serde(default)]
    pub noise: NoiseSpec,
    #[serde(default)]
    pub smoothing: SmoothingSpec,
    #[serde(default)]
    pub schedule: ScheduleSpec,
}

impl ExperimentConfig {
    pub fn new(family: Family) -> Self {
        Self {
            family,
            n: default_n(),
            m: default_m(),
            iterations: default_iterations(),
            outer_iterations: one(),
            trials: one(),
            seed: 0,
            checkpoints: default_checkpoints(),
            shared_instance: false,
            output: None,
            noise: NoiseSpec::default(),
            smoothing: SmoothingSpec::default(),
            schedule: ScheduleSpec::default(),
        }
    }

    /// Parses and validates; errors carry the offending line.
    pub fn from_toml(text: &str) -> Result<Self> {
        let mut config: Self = toml::from_str(text).map_err(|e| {
            let line = unknown_field(e.message())
                .map(|key| locate_key(text, key))
                .filter(|l| *l > 0)
                .or_else(|| {
                    e.span()
                        .map(|s| text[..s.start.min(text.len())].lines().count().max(1))
                })
                .unwrap_or(0);
            Error::Parse {
                line,
                message: e.message().to_owned(),
            }
        })?;
        config.normalize();
        config.validate().map_err(|(key, message)| Error::Parse {
            line: locate_key(text, key),
            message,
        })?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    /// Fully resolved TOML with every default written out.
    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    fn normalize(&mut self) {
        if self.family == Family::Custom1d {
            self.n = 1;
            self.m = 1;
        }
    }

    /// Checks field ranges; on failure returns the offending key.
    pub fn validate(&self) -> std::result::Result<(), (&'static str, String)> {
        let positive = |v: f64| v.is_finite() && v > 0.0;
        if self.n == 0 {
            return Err(("n", "n must be >= 1".into()));
        }
        if self.family == Family::QcqpNonconvex && self.n < 2 {
            return Err(("n", "the nonconvex family needs n >= 2".into()));
        }
        if self.iterations == 0 {
            return Err(("iterations", "iterations must be >= 1".into()));
        }
        if self.outer_iterations == 0 {
            return Err(("outer_iterations", "outer_iterations must be >= 1".into()));
        }
        if self.trials == 0 {
            return Err(("trials", "trials must be >= 1".into()));
        }
        if self.checkpoints == 0 {
            return Err(("checkpoints", "checkpoints must be >= 1".into()));
        }
        if self.seed > i64::MAX as u64 {
            return Err(("seed", "seed must be below 2^63".into()));
        }
        self.noise.model().map_err(|e| ("noise", e.to_string()))?;
        let s = &self.smoothing;
        if s.mode == ParamMode::Explicit && !(positive(s.nu0) && positive(s.nu)) {
            return Err(("nu0", "explicit smoothing radii must be positive".into()));
        }
        if !s.sweep.iter().all(|v| positive(*v)) {
            return Err(("sweep", "sweep radii must be positive".into()));
        }
        let p = &self.schedule;
        if p.mode == ParamMode::Explicit && !(positive(p.eta) && positive(p.tau)) {
            return Err(("eta", "explicit eta and tau must be positive".into()));
        }
        if !positive(p.scale) {
            return Err(("scale", "schedule scale must be positive".into()));
        }
        if !(p.dual_norm_bound.is_finite() && p.dual_norm_bound >= 0.0) {
            return Err(("dual_norm_bound", "dual_norm_bound must be >= 0".into()));
        }
        Ok(())
    }

    /// Radii to run: the sweep values, or a single `None` for the configured
    /// smoothing.
    pub fn sweep_values(&self) -> Vec<Option<f64>> {
        if self.smoothing.sweep.is_empty() {
            vec![None]
        } else {
            self.smoothing.sweep.iter().map(|v| Some(*v)).collect()
        }
    }
}

/// Field name of an "unknown field `x`" message.
fn unknown_field(message: &str) -> Option<&str> {
    let rest = message.strip_prefix("unknown field `")?;
    rest.split('`').next()
}

/// 1-based line of the first `key = ...` assignment, 0 when absent.
fn locate_key(text: &str, key: &str) -> usize {
    text.lines()
        .position(|l| {
            let l = l.trim_start();
            l.strip_prefix(key)
                .is_some_and(|rest| rest.trim_start().starts_with('='))
        })
        .map(|i| i + 1)
        .unwrap_or(0)
}

/// Names accepted by [`default_config`].
pub const PRESETS: [&str; 3] = ["qcqp-convex", "qcqp-nonconvex", "smoothing-sweep"];

/// Ready-to-run configurations for the named experiments.
pub fn default_config(name: &str) -> Option<ExperimentConfig> {
    let mut c = match name {
        "qcqp-convex" => {
            let mut c = ExperimentConfig::new(Family::QcqpConvex);
            c.n = 20;
            c.m = 3;
            c.iterations = 20_000;
            c.trials = 20;
            c.noise.coupling = NoiseCoupling::Common;
            c
        }
        "qcqp-nonconvex" => {
            let mut c = ExperimentConfig::new(Family::QcqpNonconvex);
            c.n = 10;
            c.m = 2;
            c.iterations = 2_000;
            c.outer_iterations = 20;
            c.trials = 20;
            c.checkpoints = 20;
            c.noise.coupling = NoiseCoupling::Common;
            c.schedule.scale = NONCONVEX_SCHEDULE_SCALE;
            c
        }
        "smoothing-sweep" => {
            let mut c = ExperimentConfig::new(Family::QcqpConvex);
            c.n = 20;
            c.m = 3;
            c.iterations = 20_000;
            c.trials = 20;
            c.shared_instance = true;
            c.smoothing.sweep = vec![0.05, 0.1, 2.0];
            // with cancelling noise only the O(nu^2) bias would separate the radii
            c.noise.coupling = NoiseCoupling::Independent;
            c
        }
        _ => return None,
    };
    c.seed = 1;
    if c.family != Family::QcqpNonconvex {
        c.schedule.scale = DEFAULT_SCHEDULE_SCALE;
    }
    Some(c)
}

/// Multiplier of the theorem step sizes used by the presets, calibrated on
/// the convex preset.
pub const DEFAULT_SCHEDULE_SCALE: f64 = 5e-4;

/// Same for the proximal subproblems of the nonconvex preset, which are
/// strongly convex and only 2000 steps long.
pub const NONCONVEX_SCHEDULE_SCALE: f64 = 5e-3;

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_round_trip_through_toml() {
        for name in PRESETS {
            let c = default_config(name).unwrap();
            let text = c.to_toml().unwrap();
            assert_eq!(ExperimentConfig::from_toml(&text).unwrap(), c);
        }
        assert!(default_config("nope").is_none());
    }

    #[test]
    fn defaults_are_filled_in() {
        let c = ExperimentConfig::from_toml("family = \"custom-1d\"\n").unwrap();
        assert_eq!((c.n, c.m, c.trials, c.checkpoints), (1, 1, 1, 50));
        assert_eq!(c.noise.coupling, NoiseCoupling::Independent);
        assert_eq!(c.smoothing.mode, ParamMode::Theorem1);
    }

    #[test]
    fn errors_point_at_the_line() {
        let text = "family = \"qcqp-convex\"\nn = 4\ntrials = 0\n";
        match ExperimentConfig::from_toml(text) {
            Err(Error::Parse { line, message }) => {
                assert_eq!(line, 3);
                assert!(message.contains("trials"));
            }
            other => panic!("{other:?}"),
        }
        let text = "family = \"qcqp-convex\"\n\n[noise]\nkind = \"laplace\"\n";
        assert!(matches!(
            ExperimentConfig::from_toml(text),
            Err(Error::Parse { line: 4, .. })
        ));
        let text = "family = \"qcqp-convex\"\nitertions = 5\n";
        assert!(matches!(
            ExperimentConfig::from_toml(text),
            Err(Error::Parse { line: 2, .. })
        ));
    }
}
