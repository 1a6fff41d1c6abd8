//! Experiment configuration: TOML schema, defaults, validation and digest.

use std::fmt;
use std::path::{Path, PathBuf};

use anyhow::Context;
use msbandit_core::detect::{CutGrid, DetectConfig};
use msbandit_core::env::{
    flipping_env_with, scenario_with, stationary_joint, switching_env_with, ContextDist, EnvOptions, Environment,
    GaussianNoise, ModelKind, Scenario, SegmentSchedule,
};
use msbandit_core::harness::MatchRule;
use msbandit_core::policy::{Algo, PolicyParams, Problem};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScenarioId {
    S1,
    S2,
    S3,
    S4,
    Stationary,
    Switching,
    Flipping,
    Custom,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TraceOutput {
    None,
    /// Traces of the first seed only.
    #[default]
    First,
    All,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKindCfg {
    Joint,
    Disjoint,
    Mab,
}

impl From<ModelKindCfg> for ModelKind {
    fn from(k: ModelKindCfg) -> Self {
        match k {
            ModelKindCfg::Joint => ModelKind::Joint,
            ModelKindCfg::Disjoint => ModelKind::Disjoint,
            ModelKindCfg::Mab => ModelKind::Mab,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleCfg {
    /// Segment starts, beginning with 1; the horizon end is implied.
    pub starts: Vec<usize>,
    pub params: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnvSection {
    pub arms: Option<usize>,
    pub dim: Option<usize>,
    /// Expected changes per arm (switching scenario).
    pub changes: Option<usize>,
    pub epsilon: Option<f64>,
    pub noise_sigma: Option<f64>,
    pub context_low: Option<f64>,
    pub context_high: Option<f64>,
    pub theta_low: Option<f64>,
    pub theta_high: Option<f64>,
    /// Model of a custom environment.
    pub model: Option<ModelKindCfg>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub schedules: Vec<ScheduleCfg>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolicySection {
    pub lambda: Option<f64>,
    pub beta: Option<f64>,
    pub budget: Option<f64>,
    pub sw_window: Option<usize>,
    pub d_gamma: Option<f64>,
    pub ucb_changes: Option<usize>,
    pub sw_ucb_window: Option<usize>,
    pub d_ucb_gamma: Option<f64>,
    pub ucb_xi: Option<f64>,
    pub reward_bound: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CutGridCfg {
    All,
    Geometric,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetectSection {
    pub c: Option<f64>,
    pub xi: Option<f64>,
    pub alpha: Option<f64>,
    pub use_all_pulls: Option<bool>,
    pub reuse_tail: Option<bool>,
    pub min_block: Option<usize>,
    pub cond_limit: Option<f64>,
    pub cut_grid: Option<CutGridCfg>,
    pub gram_check: Option<bool>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MatchByCfg {
    Alarm,
    Cut,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReportSection {
    pub match_by: Option<MatchByCfg>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub scenario: ScenarioId,
    pub algos: Vec<String>,
    #[serde(default = "default_horizon")]
    pub horizon: usize,
    #[serde(default = "default_reps")]
    pub reps: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing)]
    pub out: Option<PathBuf>,
    #[serde(default)]
    pub traces: TraceOutput,
    #[serde(default)]
    pub env: EnvSection,
    #[serde(default)]
    pub policy: PolicySection,
    #[serde(default)]
    pub detect: DetectSection,
    #[serde(default)]
    pub report: ReportSection,
}

fn default_horizon() -> usize {
    10_000
}

fn default_reps() -> usize {
    10
}

/// One broken constraint, named by its config key.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub key: String,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.key, self.message)
    }
}

/// Numeric keys accepted by `sweep`, and whether they take integers.
pub const SWEEPABLE: &[(&str, bool)] = &[
    ("horizon", true),
    ("reps", true),
    ("seed", true),
    ("env.arms", true),
    ("env.dim", true),
    ("env.changes", true),
    ("env.epsilon", false),
    ("env.noise_sigma", false),
    ("env.context_low", false),
    ("env.context_high", false),
    ("env.theta_low", false),
    ("env.theta_high", false),
    ("policy.lambda", false),
    ("policy.beta", false),
    ("policy.budget", false),
    ("policy.sw_window", true),
    ("policy.d_gamma", false),
    ("policy.ucb_changes", true),
    ("policy.sw_ucb_window", true),
    ("policy.d_ucb_gamma", false),
    ("policy.ucb_xi", false),
    ("policy.reward_bound", false),
    ("detect.c", false),
    ("detect.xi", false),
    ("detect.alpha", false),
    ("detect.min_block", true),
    ("detect.cond_limit", false),
];

/// Full key for `key`, accepting a unique case-insensitive suffix such as `epsilon`.
pub fn resolve_sweep_key(key: &str) -> anyhow::Result<(&'static str, bool)> {
    let lower = key.to_ascii_lowercase();
    if let Some(&hit) = SWEEPABLE.iter().find(|(k, _)| *k == lower) {
        return Ok(hit);
    }
    let hits: Vec<_> = SWEEPABLE
        .iter()
        .filter(|(k, _)| k.rsplit('.').next() == Some(lower.as_str()))
        .collect();
    match hits.as_slice() {
        [hit] => Ok(**hit),
        _ => {
            let keys: Vec<&str> = SWEEPABLE.iter().map(|(k, _)| *k).collect();
            anyhow::bail!("unknown sweep key `{key}`; sweepable keys: {}", keys.join(", "))
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> anyhow::Result<Self> {
        Ok(toml::from_str(text)?)
    }

    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        Self::from_toml(&text).with_context(|| format!("parsing {}", path.display()))
    }

    /// Copy with one numeric key replaced.
    pub fn with_value(&self, key: &str, value: &str) -> anyhow::Result<Self> {
        let (full, integer) = resolve_sweep_key(key)?;
        let mut table = toml::Table::try_from(self)?;
        let v = if integer {
            toml::Value::Integer(
                value
                    .trim()
                    .parse()
                    .with_context(|| format!("{full} takes an integer, got `{value}`"))?,
            )
        } else {
            toml::Value::Float(
                value
                    .trim()
                    .parse()
                    .with_context(|| format!("{full} takes a number, got `{value}`"))?,
            )
        };
        let mut node = &mut table;
        let mut parts = full.split('.').peekable();
        while let Some(part) = parts.next() {
            if parts.peek().is_none() {
                node.insert(part.to_owned(), v.clone());
            } else {
                node = node
                    .entry(part.to_owned())
                    .or_insert_with(|| toml::Value::Table(Default::default()))
                    .as_table_mut()
                    .expect("config sections are tables");
            }
        }
        let mut next: Self = table.try_into()?;
        next.out = self.out.clone();
        Ok(next)
    }

    /// SHA-256 of the canonical serialization (output paths excluded).
    pub fn digest(&self) -> String {
        let canonical = toml::to_string(self).expect("config serializes");
        let hash = Sha256::digest(canonical.as_bytes());
        hash.iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn out_dir(&self) -> PathBuf {
        self.out.clone().unwrap_or_else(|| PathBuf::from("out"))
    }

    pub fn match_rule(&self) -> MatchRule {
        match self.report.match_by {
            Some(MatchByCfg::Cut) => MatchRule::Cut,
            _ => MatchRule::Alarm,
        }
    }

    /// Model kind, arm count and dimension implied by the environment section.
    pub fn shape(&self) -> (ModelKind, usize, usize) {
        match self.scenario {
            ScenarioId::S1 | ScenarioId::S3 => (ModelKind::Joint, 2, 2),
            ScenarioId::S2 => (ModelKind::Joint, 2, 50),
            ScenarioId::S4 => (ModelKind::Joint, 4, 2),
            ScenarioId::Stationary => (ModelKind::Joint, self.env.arms.unwrap_or(2), self.env.dim.unwrap_or(2)),
            ScenarioId::Switching => (ModelKind::Mab, self.env.arms.unwrap_or(5), 1),
            ScenarioId::Flipping => (ModelKind::Mab, 2, 1),
            ScenarioId::Custom => {
                let kind = self.env.model.map(ModelKind::from).unwrap_or(ModelKind::Joint);
                let dim = self
                    .env
                    .schedules
                    .first()
                    .and_then(|s| s.params.first())
                    .map_or(1, Vec::len);
                let arms = match kind {
                    ModelKind::Joint => self.env.arms.unwrap_or(2),
                    _ => self.env.schedules.len(),
                };
                (kind, arms, dim)
            }
        }
    }

    fn env_options(&self) -> EnvOptions {
        let d = EnvOptions::default();
        let (low, high) = match d.context {
            ContextDist::Uniform { low, high } => (low, high),
            ContextDist::Constant(v) => (v, v),
        };
        EnvOptions {
            context: ContextDist::Uniform {
                low: self.env.context_low.unwrap_or(low),
                high: self.env.context_high.unwrap_or(high),
            },
            theta_low: self.env.theta_low.unwrap_or(d.theta_low),
            theta_high: self.env.theta_high.unwrap_or(d.theta_high),
            noise_sigma: self.env.noise_sigma.unwrap_or(d.noise_sigma),
        }
    }

    /// Environment of one replicate; randomized scenarios are redrawn from `env_seed`.
    pub fn environment(&self, env_seed: u64) -> msbandit_core::Result<Environment> {
        let opts = self.env_options();
        let t = self.horizon;
        match self.scenario {
            ScenarioId::S1 => scenario_with(Scenario::S1, t, env_seed, &opts),
            ScenarioId::S2 => scenario_with(Scenario::S2, t, env_seed, &opts),
            ScenarioId::S3 => scenario_with(Scenario::S3, t, env_seed, &opts),
            ScenarioId::S4 => scenario_with(Scenario::S4, t, env_seed, &opts),
            ScenarioId::Stationary => {
                let (_, arms, dim) = self.shape();
                stationary_joint(arms, dim, t, env_seed, &opts)
            }
            ScenarioId::Switching => {
                let (_, arms, _) = self.shape();
                switching_env_with(arms, self.env.changes.unwrap_or(5), t, env_seed, opts.noise_sigma)
            }
            ScenarioId::Flipping => flipping_env_with(self.env.epsilon.unwrap_or(0.06), t, opts.noise_sigma),
            ScenarioId::Custom => {
                let (kind, arms, _) = self.shape();
                let schedules = self
                    .env
                    .schedules
                    .iter()
                    .map(|s| {
                        let mut cps = s.starts.clone();
                        cps.push(t + 1);
                        SegmentSchedule::new(cps, s.params.clone())
                    })
                    .collect::<msbandit_core::Result<Vec<_>>>()?;
                Environment::new(
                    kind,
                    arms,
                    schedules,
                    opts.context,
                    GaussianNoise {
                        sigma: opts.noise_sigma,
                    },
                )
            }
        }
    }

    pub fn algos(&self) -> Vec<Algo> {
        self.algos.iter().filter_map(|a| a.parse().ok()).collect()
    }

    pub fn policy_params(&self, problem: &Problem) -> PolicyParams {
        let d = PolicyParams::default();
        let p = &self.policy;
        let mut params = PolicyParams {
            lambda: p.lambda.unwrap_or(d.lambda),
            beta: p.beta.unwrap_or(d.beta),
            budget: p.budget.unwrap_or(d.budget),
            sw_window: p.sw_window,
            d_gamma: p.d_gamma,
            ucb_changes: p.ucb_changes,
            sw_ucb_window: p.sw_ucb_window,
            d_ucb_gamma: p.d_ucb_gamma,
            ucb_xi: p.ucb_xi.unwrap_or(d.ucb_xi),
            reward_bound: p.reward_bound.unwrap_or(d.reward_bound),
            detect: None,
        };
        params.detect = Some(self.detect_config(problem.horizon, problem.arms, problem.dim));
        params
    }

    pub fn detect_config(&self, horizon: usize, arms: usize, dim: usize) -> DetectConfig {
        let mut cfg = DetectConfig::for_problem(horizon, arms, dim);
        let d = &self.detect;
        if let Some(c) = d.c {
            cfg.c = c;
        }
        if let Some(xi) = d.xi {
            cfg.xi = xi;
        }
        if let Some(a) = d.alpha {
            cfg.alpha = a;
        }
        if let Some(v) = d.use_all_pulls {
            cfg.use_all_pulls = v;
        }
        if let Some(v) = d.reuse_tail {
            cfg.reuse_tail = v;
        }
        if d.min_block.is_some() {
            cfg.min_block = d.min_block;
        }
        if let Some(v) = d.cond_limit {
            cfg.cond_limit = v;
        }
        if let Some(g) = d.cut_grid {
            cfg.cut_grid = match g {
                CutGridCfg::All => CutGrid::All,
                CutGridCfg::Geometric => CutGrid::Geometric,
            };
        }
        if let Some(v) = d.gram_check {
            cfg.gram_check = v;
        }
        cfg
    }

    /// Every constraint violation, in key order of discovery.
    pub fn violations(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        let mut bad = |key: &str, message: String| {
            out.push(Violation {
                key: key.to_owned(),
                message,
            })
        };
        let (kind, arms, dim) = self.shape();

        if self.algos.is_empty() {
            bad("algos", "at least one algorithm is required".into());
        }
        for name in &self.algos {
            match name.parse::<Algo>() {
                Err(_) => {
                    let known: Vec<&str> = Algo::ALL.iter().map(|a| a.name()).collect();
                    bad(
                        "algos",
                        format!("unknown algorithm `{name}` (known: {})", known.join(", ")),
                    );
                }
                Ok(a) if a.is_contextual() == (kind == ModelKind::Mab) => {
                    bad(
                        "algos",
                        format!("`{name}` does not apply to a {} environment", kind.name()),
                    );
                }
                Ok(_) => {}
            }
        }
        if self.horizon < 3 {
            bad("horizon", "horizon must be at least 3".into());
        }
        if self.reps == 0 {
            bad("reps", "reps must be at least 1".into());
        }
        if arms < 2 {
            bad("env.arms", "need at least two arms".into());
        }
        if dim == 0 {
            bad("env.dim", "dimension must be positive".into());
        }

        let e = &self.env;
        if let Some(eps) = e.epsilon {
            if !(eps > 0.0 && eps < 0.5) {
                bad("env.epsilon", "epsilon must lie in (0, 0.5)".into());
            }
        }
        if let Some(s) = e.noise_sigma {
            if !(s >= 0.0 && s.is_finite()) {
                bad("env.noise_sigma", "noise sigma must be finite and non-negative".into());
            }
        }
        if let (Some(l), Some(h)) = (e.context_low, e.context_high) {
            if !(l <= h) {
                bad("env.context_low", "context_low must not exceed context_high".into());
            }
        }
        if let (Some(l), Some(h)) = (e.theta_low, e.theta_high) {
            if !(l <= h) {
                bad("env.theta_low", "theta_low must not exceed theta_high".into());
            }
        }
        if self.scenario == ScenarioId::Custom {
            let need = if kind == ModelKind::Joint { 1 } else { arms };
            if e.schedules.is_empty() || e.schedules.len() != need {
                bad(
                    "env.schedules",
                    format!("{} model needs {need} schedule(s)", kind.name()),
                );
            }
            for (i, s) in e.schedules.iter().enumerate() {
                let mut cps = s.starts.clone();
                cps.push(self.horizon + 1);
                if let Err(err) = SegmentSchedule::new(cps, s.params.clone()) {
                    bad(&format!("env.schedules[{i}]"), err.to_string());
                } else if s.params.iter().any(|p| p.len() != dim) {
                    bad(&format!("env.schedules[{i}]"), "parameter lengths disagree".into());
                } else if kind == ModelKind::Mab && dim != 1 {
                    bad(
                        &format!("env.schedules[{i}]"),
                        "multi-armed schedules take scalar means".into(),
                    );
                }
            }
        }

        let p = &self.policy;
        if let Some(v) = p.lambda {
            if !(v > 0.0) {
                bad("policy.lambda", "lambda must be positive".into());
            }
        }
        if let Some(v) = p.beta {
            if !(v >= 0.0) {
                bad("policy.beta", "beta must be non-negative".into());
            }
        }
        if let Some(v) = p.budget {
            if !(v > 0.0) {
                bad("policy.budget", "variation budget must be positive".into());
            }
        }
        for (key, v) in [
            ("policy.sw_window", p.sw_window),
            ("policy.sw_ucb_window", p.sw_ucb_window),
        ] {
            if v == Some(0) {
                bad(key, "window must hold at least one round".into());
            }
        }
        if p.ucb_changes == Some(0) {
            bad("policy.ucb_changes", "segment count must be at least 1".into());
        }
        for (key, v) in [("policy.d_gamma", p.d_gamma), ("policy.d_ucb_gamma", p.d_ucb_gamma)] {
            if let Some(g) = v {
                if !(g > 0.0 && g <= 1.0) {
                    bad(key, "discount must lie in (0, 1]".into());
                }
            }
        }
        for (key, v) in [("policy.ucb_xi", p.ucb_xi), ("policy.reward_bound", p.reward_bound)] {
            if let Some(x) = v {
                if !(x > 0.0) {
                    bad(key, "must be positive".into());
                }
            }
        }

        let cfg = self.detect_config(self.horizon.max(3), arms.max(1), dim.max(1));
        if !(cfg.xi > 1.0 && cfg.xi < 2.0) {
            bad("detect.xi", "xi must lie in (1,2)".into());
        }
        if !(cfg.c > 0.0) {
            bad("detect.c", "C must be positive".into());
        }
        if !(cfg.alpha >= 0.0) {
            bad("detect.alpha", "alpha must be non-negative".into());
        } else if arms as f64 * cfg.alpha >= 1.0
            && self
                .algos()
                .iter()
                .any(|a| matches!(a, Algo::MultiscaleLinUcb | Algo::MultiscaleUcb))
        {
            bad(
                "detect.alpha",
                format!("K·alpha ≥ 1 (K={arms}, alpha={:.6})", cfg.alpha),
            );
        }
        if cfg.min_block == Some(0) {
            bad("detect.min_block", "minimum block size must be at least 1".into());
        }
        if !(cfg.cond_limit > 1.0) {
            bad("detect.cond_limit", "condition limit must exceed 1".into());
        }
        out
    }

    /// Non-fatal remarks.
    pub fn warnings(&self) -> Vec<String> {
        let mut out = Vec::new();
        if let Some(s) = self.env.noise_sigma {
            if s != 1.0 && self.detect.c.is_none() {
                out.push(format!(
                    "env.noise_sigma = {s}: detection thresholds assume unit noise; rescale detect.c accordingly"
                ));
            }
        }
        out
    }
}
