//! Piecewise-stationary reward environments.
//!
//! An [`Environment`] owns one [`SegmentSchedule`] per arm (disjoint linear and
//! multi-armed models) or a single shared schedule (joint linear model). Rounds
//! are 1-based throughout; a schedule over horizon `T` always starts at round 1
//! and ends with the sentinel `T + 1`.

use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{invalid, Error, Result};
use crate::linalg::dot;

/// How arm parameters are shared.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ModelKind {
    /// Every arm has its own parameter vector and schedule.
    Disjoint,
    /// One parameter vector and schedule shared by all arms.
    Joint,
    /// Classic multi-armed bandit: dimension 1, constant context 1.
    Mab,
}

impl ModelKind {
    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Disjoint => "disjoint",
            ModelKind::Joint => "joint",
            ModelKind::Mab => "mab",
        }
    }
}

/// Changepoints `c_0 = 1 < c_1 < ... < c_m = T + 1` and one parameter per segment.
#[derive(Debug, Clone, PartialEq)]
pub struct SegmentSchedule {
    changepoints: Vec<usize>,
    params: Vec<Vec<f64>>,
}

impl SegmentSchedule {
    pub fn new(changepoints: Vec<usize>, params: Vec<Vec<f64>>) -> Result<Self> {
        if changepoints.len() < 2 {
            return Err(invalid("changepoints", "need at least the start and end sentinels"));
        }
        if changepoints[0] != 1 {
            return Err(invalid("changepoints", "first changepoint must be round 1"));
        }
        if changepoints.windows(2).any(|w| w[0] >= w[1]) {
            return Err(invalid("changepoints", "changepoints must be strictly increasing"));
        }
        if params.len() != changepoints.len() - 1 {
            return Err(invalid(
                "params",
                alloc::format!(
                    "expected {} segment parameters, got {}",
                    changepoints.len() - 1,
                    params.len()
                ),
            ));
        }
        let dim = params[0].len();
        if dim == 0 || params.iter().any(|p| p.len() != dim) {
            return Err(invalid(
                "params",
                "all segment parameters must share a positive dimension",
            ));
        }
        Ok(Self { changepoints, params })
    }

    pub fn stationary(horizon: usize, param: Vec<f64>) -> Result<Self> {
        Self::new(vec![1, horizon + 1], vec![param])
    }

    pub fn changepoints(&self) -> &[usize] {
        &self.changepoints
    }

    /// Changepoints strictly inside the horizon (excludes round 1 and `T + 1`).
    pub fn interior_changepoints(&self) -> &[usize] {
        &self.changepoints[1..self.changepoints.len() - 1]
    }

    pub fn params(&self) -> &[Vec<f64>] {
        &self.params
    }

    pub fn segment_count(&self) -> usize {
        self.params.len()
    }

    pub fn horizon(&self) -> usize {
        self.changepoints[self.changepoints.len() - 1] - 1
    }

    pub fn dim(&self) -> usize {
        self.params[0].len()
    }

    /// Segment lengths `S_j = c_j - c_{j-1}`.
    pub fn lengths(&self) -> Vec<usize> {
        self.changepoints.windows(2).map(|w| w[1] - w[0]).collect()
    }

    /// Index of the segment containing round `t` (caller checks the range).
    pub fn segment_at(&self, t: usize) -> usize {
        self.changepoints.partition_point(|&c| c <= t) - 1
    }

    pub fn param_at(&self, t: usize) -> &[f64] {
        &self.params[self.segment_at(t)]
    }
}

/// Distribution of the per-arm feature vectors.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ContextDist {
    /// Independent coordinates uniform on `[low, high)`.
    Uniform { low: f64, high: f64 },
    /// Every coordinate equal to the given value.
    Constant(f64),
}

impl Default for ContextDist {
    fn default() -> Self {
        ContextDist::Uniform { low: 0.0, high: 10.0 }
    }
}

/// Additive zero-mean reward noise.
pub trait NoiseModel {
    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64;
    /// Scale used by threshold validation (the sub-Gaussian parameter).
    fn scale(&self) -> f64;
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussianNoise {
    pub sigma: f64,
}

impl Default for GaussianNoise {
    fn default() -> Self {
        Self { sigma: 1.0 }
    }
}

impl NoiseModel for GaussianNoise {
    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        if self.sigma == 0.0 {
            return 0.0;
        }
        let z: f64 = StandardNormal.sample(rng);
        self.sigma * z
    }

    fn scale(&self) -> f64 {
        self.sigma
    }
}

/// Feature vectors of all arms for one round, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Contexts {
    dim: usize,
    data: Vec<f64>,
}

impl Contexts {
    pub fn new(arms: usize, dim: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != arms * dim {
            return Err(Error::DimensionMismatch {
                expected: arms * dim,
                got: data.len(),
            });
        }
        Ok(Self { dim, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let dim = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * dim);
        for r in rows {
            if r.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    got: r.len(),
                });
            }
            data.extend_from_slice(r);
        }
        Ok(Self { dim, data })
    }

    pub fn arms(&self) -> usize {
        self.data.len().checked_div(self.dim).unwrap_or(0)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn arm(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }
}

/// Oracle quantities for one round.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleRow {
    pub means: Vec<f64>,
    pub best_arm: usize,
    pub best_mean: f64,
}

impl OracleRow {
    pub fn from_means(means: Vec<f64>) -> Self {
        let mut best_arm = 0;
        for (i, m) in means.iter().enumerate() {
            if *m > means[best_arm] {
                best_arm = i;
            }
        }
        let best_mean = means[best_arm];
        Self {
            means,
            best_arm,
            best_mean,
        }
    }

    /// Gap `mu_{t,a_t} - mu_{t,i}`.
    pub fn gap(&self, arm: usize) -> f64 {
        self.best_mean - self.means[arm]
    }
}

/// A piecewise-stationary bandit environment. Immutable once built.
#[derive(Debug, Clone, PartialEq)]
pub struct Environment<N = GaussianNoise> {
    kind: ModelKind,
    horizon: usize,
    arms: usize,
    dim: usize,
    schedules: Vec<SegmentSchedule>,
    context: ContextDist,
    noise: N,
}

impl<N: NoiseModel> Environment<N> {
    pub fn new(
        kind: ModelKind,
        arms: usize,
        schedules: Vec<SegmentSchedule>,
        context: ContextDist,
        noise: N,
    ) -> Result<Self> {
        if arms < 2 {
            return Err(invalid("arms", "need at least two arms"));
        }
        let first = schedules
            .first()
            .ok_or_else(|| invalid("schedules", "no schedule given"))?;
        let horizon = first.horizon();
        let dim = first.dim();
        if horizon < 1 {
            return Err(invalid("horizon", "horizon must be at least 1"));
        }
        let expected = match kind {
            ModelKind::Joint => 1,
            ModelKind::Disjoint | ModelKind::Mab => arms,
        };
        if schedules.len() != expected {
            return Err(invalid(
                "schedules",
                alloc::format!("{} model with {arms} arms needs {expected} schedules", kind.name()),
            ));
        }
        if schedules.iter().any(|s| s.horizon() != horizon || s.dim() != dim) {
            return Err(invalid("schedules", "schedules disagree on horizon or dimension"));
        }
        let context = if kind == ModelKind::Mab {
            if dim != 1 {
                return Err(invalid("dim", "multi-armed environments have dimension 1"));
            }
            ContextDist::Constant(1.0)
        } else {
            context
        };
        Ok(Self {
            kind,
            horizon,
            arms,
            dim,
            schedules,
            context,
            noise,
        })
    }

    pub fn kind(&self) -> ModelKind {
        self.kind
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn arms(&self) -> usize {
        self.arms
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn schedules(&self) -> &[SegmentSchedule] {
        &self.schedules
    }

    pub fn context_dist(&self) -> ContextDist {
        self.context
    }

    pub fn noise(&self) -> &N {
        &self.noise
    }

    /// Schedule governing `arm`.
    pub fn schedule_for(&self, arm: usize) -> &SegmentSchedule {
        match self.kind {
            ModelKind::Joint => &self.schedules[0],
            _ => &self.schedules[arm],
        }
    }

    /// Number of stationary segments over the union of all changepoints.
    pub fn distinct_segments(&self) -> usize {
        let mut cps: Vec<usize> = self
            .schedules
            .iter()
            .flat_map(|s| s.interior_changepoints().iter().copied())
            .collect();
        cps.sort_unstable();
        cps.dedup();
        cps.len() + 1
    }

    fn check_round(&self, t: usize) -> Result<()> {
        if t == 0 || t > self.horizon {
            Err(Error::RoundOutOfRange {
                t,
                horizon: self.horizon,
            })
        } else {
            Ok(())
        }
    }

    pub fn sample_contexts<R: Rng + ?Sized>(&self, rng: &mut R) -> Contexts {
        let n = self.arms * self.dim;
        let data = match self.context {
            ContextDist::Uniform { low, high } => (0..n).map(|_| low + (high - low) * rng.random::<f64>()).collect(),
            ContextDist::Constant(v) => vec![v; n],
        };
        Contexts { dim: self.dim, data }
    }

    /// Mean reward `x^T theta` of `arm` at round `t` (unchecked range).
    pub fn mean(&self, t: usize, arm: usize, context: &[f64]) -> f64 {
        dot(context, self.schedule_for(arm).param_at(t))
    }

    pub fn oracle(&self, t: usize, contexts: &Contexts) -> Result<OracleRow> {
        self.check_round(t)?;
        if contexts.dim() != self.dim || contexts.arms() != self.arms {
            return Err(Error::DimensionMismatch {
                expected: self.arms * self.dim,
                got: contexts.arms() * contexts.dim(),
            });
        }
        let means = (0..self.arms).map(|i| self.mean(t, i, contexts.arm(i))).collect();
        Ok(OracleRow::from_means(means))
    }

    /// Draws the round's contexts and computes the oracle row.
    pub fn sample_round<R: Rng + ?Sized>(&self, t: usize, rng: &mut R) -> Result<(Contexts, OracleRow)> {
        self.check_round(t)?;
        let contexts = self.sample_contexts(rng);
        let oracle = self.oracle(t, &contexts)?;
        Ok((contexts, oracle))
    }

    /// Noisy reward for pulling `arm` with feature vector `context` at round `t`.
    pub fn draw_reward<R: Rng + ?Sized>(&self, t: usize, arm: usize, context: &[f64], rng: &mut R) -> Result<f64> {
        self.check_round(t)?;
        if arm >= self.arms {
            return Err(Error::ArmOutOfRange { arm, arms: self.arms });
        }
        if context.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: context.len(),
            });
        }
        Ok(self.mean(t, arm, context) + self.noise.sample(rng))
    }
}

/// Overridable draws used by the synthetic scenarios.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnvOptions {
    pub context: ContextDist,
    pub theta_low: f64,
    pub theta_high: f64,
    pub noise_sigma: f64,
}

impl Default for EnvOptions {
    fn default() -> Self {
        Self {
            context: ContextDist::default(),
            theta_low: -1.0,
            theta_high: 1.0,
            noise_sigma: 1.0,
        }
    }
}

impl EnvOptions {
    fn draw_theta<R: Rng + ?Sized>(&self, dim: usize, rng: &mut R) -> Vec<f64> {
        (0..dim)
            .map(|_| self.theta_low + (self.theta_high - self.theta_low) * rng.random::<f64>())
            .collect()
    }
}

/// The four joint-model experiments.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Scenario {
    /// Fixed sign flips of a 2-d parameter at fifths of the horizon.
    S1,
    /// Dimension 50, ten evenly spaced changes.
    S2,
    /// Random changes with rate `10 / T`, two arms.
    S3,
    /// Random changes with rate `10 / T`, four arms.
    S4,
}

impl Scenario {
    pub fn name(self) -> &'static str {
        match self {
            Scenario::S1 => "s1",
            Scenario::S2 => "s2",
            Scenario::S3 => "s3",
            Scenario::S4 => "s4",
        }
    }
}

pub fn scenario(id: Scenario, horizon: usize, seed: u64) -> Result<Environment> {
    scenario_with(id, horizon, seed, &EnvOptions::default())
}

/// Builds a scenario with the given draw options. Randomized schedules are drawn
/// up front from `seed`.
pub fn scenario_with(id: Scenario, horizon: usize, seed: u64, opts: &EnvOptions) -> Result<Environment> {
    if horizon < 1 {
        return Err(invalid("horizon", "horizon must be at least 1"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (arms, schedule) = match id {
        Scenario::S1 => {
            let thetas = [[1.0, 0.0], [-1.0, 0.0], [0.0, 1.0], [0.0, -1.0]];
            let mut cps = vec![1];
            let mut params = vec![thetas[0].to_vec()];
            for (k, theta) in thetas.iter().enumerate().skip(1) {
                let c = k * horizon / 5;
                if c > *cps.last().unwrap() && c <= horizon {
                    cps.push(c);
                    params.push(theta.to_vec());
                }
            }
            cps.push(horizon + 1);
            (2, SegmentSchedule::new(cps, params)?)
        }
        Scenario::S2 => {
            let dim = 50;
            let mut cps = vec![1];
            for j in 1..=10 {
                let c = 1 + j * horizon / 11;
                if c > *cps.last().unwrap() && c <= horizon {
                    cps.push(c);
                }
            }
            cps.push(horizon + 1);
            let params = (0..cps.len() - 1).map(|_| opts.draw_theta(dim, &mut rng)).collect();
            (2, SegmentSchedule::new(cps, params)?)
        }
        Scenario::S3 | Scenario::S4 => {
            let arms = if id == Scenario::S3 { 2 } else { 4 };
            (
                arms,
                random_schedule(horizon, 2, 10.0 / horizon as f64, opts, &mut rng)?,
            )
        }
    };
    Environment::new(
        ModelKind::Joint,
        arms,
        vec![schedule],
        opts.context,
        GaussianNoise {
            sigma: opts.noise_sigma,
        },
    )
}

fn random_schedule<R: Rng + ?Sized>(
    horizon: usize,
    dim: usize,
    rate: f64,
    opts: &EnvOptions,
    rng: &mut R,
) -> Result<SegmentSchedule> {
    let mut cps = vec![1];
    let mut params = vec![opts.draw_theta(dim, rng)];
    for t in 2..=horizon {
        if rng.random::<f64>() < rate {
            cps.push(t);
            params.push(opts.draw_theta(dim, rng));
        }
    }
    cps.push(horizon + 1);
    SegmentSchedule::new(cps, params)
}

/// Single-segment joint environment with a random parameter.
pub fn stationary_joint(arms: usize, dim: usize, horizon: usize, seed: u64, opts: &EnvOptions) -> Result<Environment> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let theta = opts.draw_theta(dim, &mut rng);
    Environment::new(
        ModelKind::Joint,
        arms,
        vec![SegmentSchedule::stationary(horizon, theta)?],
        opts.context,
        GaussianNoise {
            sigma: opts.noise_sigma,
        },
    )
}

/// Multi-armed environment whose arm means are redrawn from `U[0,1]` with
/// probability `changes / T` per arm and round.
pub fn switching_env(arms: usize, changes: usize, horizon: usize, seed: u64) -> Result<Environment> {
    switching_env_with(arms, changes, horizon, seed, 1.0)
}

pub fn switching_env_with(
    arms: usize,
    changes: usize,
    horizon: usize,
    seed: u64,
    noise_sigma: f64,
) -> Result<Environment> {
    if arms < 2 {
        return Err(invalid("arms", "need at least two arms"));
    }
    if horizon < 1 {
        return Err(invalid("horizon", "horizon must be at least 1"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rate = changes as f64 / horizon as f64;
    let opts = EnvOptions {
        theta_low: 0.0,
        theta_high: 1.0,
        ..EnvOptions::default()
    };
    let schedules = (0..arms)
        .map(|_| random_schedule(horizon, 1, rate, &opts, &mut rng))
        .collect::<Result<Vec<_>>>()?;
    Environment::new(
        ModelKind::Mab,
        arms,
        schedules,
        ContextDist::Constant(1.0),
        GaussianNoise { sigma: noise_sigma },
    )
}

/// Two-armed environment: arm 0 fixed at 0.5, arm 1 at 0.8 except for the
/// middle third where it drops to `0.5 - epsilon`.
pub fn flipping_env(epsilon: f64, horizon: usize) -> Result<Environment> {
    flipping_env_with(epsilon, horizon, 1.0)
}

pub fn flipping_env_with(epsilon: f64, horizon: usize, noise_sigma: f64) -> Result<Environment> {
    if !(epsilon > 0.0 && epsilon < 0.5) {
        return Err(invalid("epsilon", "epsilon must lie in (0, 0.5)"));
    }
    if horizon < 3 {
        return Err(invalid("horizon", "flipping environment needs at least 3 rounds"));
    }
    let first = horizon / 3 + 1;
    let second = 2 * horizon / 3 + 1;
    let steady = SegmentSchedule::stationary(horizon, vec![0.5])?;
    let flipping = SegmentSchedule::new(
        vec![1, first, second, horizon + 1],
        vec![vec![0.8], vec![0.5 - epsilon], vec![0.8]],
    )?;
    Environment::new(
        ModelKind::Mab,
        2,
        vec![steady, flipping],
        ContextDist::Constant(1.0),
        GaussianNoise { sigma: noise_sigma },
    )
}
