//! Bandit policies: multiscale-restarted LinUCB and UCB plus the usual
//! non-stationary baselines.

mod forced;
mod linucb;
mod ridge;
mod ucb;

use alloc::boxed::Box;
use core::fmt;
use core::str::FromStr;

use rand::RngCore;

pub use forced::{preselect, preselect_shared, ForcedSchedule};
pub use linucb::{linucb_select, Forgetting, LinUcb, MultiscaleLinUcb};
pub use ridge::{RidgeArmState, RidgeFit};
pub use ucb::{MultiscaleUcb, Ucb, UcbArmState, UcbVariant};

use crate::detect::{DetectConfig, DetectionResult};
use crate::env::{Contexts, ModelKind};
use crate::error::{invalid, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Choice {
    pub arm: usize,
    pub forced: bool,
}

/// A detector firing. `arm` is `None` for the shared joint model.
#[derive(Debug, Clone, PartialEq)]
pub struct Alarm {
    pub arm: Option<usize>,
    pub result: DetectionResult,
}

pub trait Policy: Send {
    fn name(&self) -> &'static str;

    /// Arm to pull at round `t` (1-based).
    fn select(&mut self, t: usize, contexts: &Contexts, rng: &mut dyn RngCore) -> Choice;

    /// Feed back the reward of the pulled arm and its context.
    fn update(&mut self, t: usize, choice: Choice, context: &[f64], reward: f64) -> Option<Alarm>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Algo {
    MultiscaleLinUcb,
    LinUcb,
    SwLinUcb,
    DLinUcb,
    MultiscaleUcb,
    Ucb,
    SwUcb,
    DUcb,
}

impl Algo {
    pub const ALL: [Algo; 8] = [
        Algo::MultiscaleLinUcb,
        Algo::LinUcb,
        Algo::SwLinUcb,
        Algo::DLinUcb,
        Algo::MultiscaleUcb,
        Algo::Ucb,
        Algo::SwUcb,
        Algo::DUcb,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Algo::MultiscaleLinUcb => "multiscale-linucb",
            Algo::LinUcb => "linucb",
            Algo::SwLinUcb => "sw-linucb",
            Algo::DLinUcb => "d-linucb",
            Algo::MultiscaleUcb => "multiscale-ucb",
            Algo::Ucb => "ucb",
            Algo::SwUcb => "sw-ucb",
            Algo::DUcb => "d-ucb",
        }
    }

    pub fn is_contextual(self) -> bool {
        matches!(
            self,
            Algo::MultiscaleLinUcb | Algo::LinUcb | Algo::SwLinUcb | Algo::DLinUcb
        )
    }
}

impl fmt::Display for Algo {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Algo {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Algo::ALL
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| invalid("algo", alloc::format!("unknown algorithm `{s}`")))
    }
}

/// Shape of the problem a policy is built for.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Problem {
    pub kind: ModelKind,
    pub arms: usize,
    pub dim: usize,
    pub horizon: usize,
    /// Number of stationary segments handed to the MAB baselines.
    pub segments: usize,
}

/// Hyperparameters; `None` fields fall back to horizon-dependent defaults.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyParams {
    pub lambda: f64,
    pub beta: f64,
    /// Variation budget used for the SW/D-LinUCB defaults.
    pub budget: f64,
    pub sw_window: Option<usize>,
    pub d_gamma: Option<f64>,
    /// Number of segments assumed by SW-UCB and D-UCB.
    pub ucb_changes: Option<usize>,
    pub sw_ucb_window: Option<usize>,
    pub d_ucb_gamma: Option<f64>,
    pub ucb_xi: f64,
    pub reward_bound: f64,
    pub detect: Option<DetectConfig>,
}

impl Default for PolicyParams {
    fn default() -> Self {
        Self {
            lambda: 1.0,
            beta: 1.0,
            budget: 1.0,
            sw_window: None,
            d_gamma: None,
            ucb_changes: None,
            sw_ucb_window: None,
            d_ucb_gamma: None,
            ucb_xi: 0.6,
            reward_bound: 1.0,
            detect: None,
        }
    }
}

/// `round((p T / B)^(2/3))`, at least 1.
pub fn default_sw_window(dim: usize, horizon: usize, budget: f64) -> usize {
    (libm::round(libm::pow(dim as f64 * horizon as f64 / budget, 2.0 / 3.0)) as usize).max(1)
}

/// `1 - (B / (p T))^(2/3)`.
pub fn default_d_gamma(dim: usize, horizon: usize, budget: f64) -> f64 {
    1.0 - libm::pow(budget / (dim as f64 * horizon as f64), 2.0 / 3.0)
}

/// `2 sqrt(T log T / D)`, at least 1.
pub fn default_sw_ucb_window(horizon: usize, segments: usize) -> usize {
    let t = horizon as f64;
    (libm::round(2.0 * libm::sqrt(t * libm::log(t) / segments as f64)) as usize).max(1)
}

/// `1 - sqrt(D / T) / 4`.
pub fn default_d_ucb_gamma(horizon: usize, segments: usize) -> f64 {
    1.0 - 0.25 * libm::sqrt(segments as f64 / horizon as f64)
}

impl PolicyParams {
    pub fn detect_for(&self, problem: &Problem) -> DetectConfig {
        self.detect
            .clone()
            .unwrap_or_else(|| DetectConfig::for_problem(problem.horizon, problem.arms, problem.dim))
    }
}

/// Builds a policy. `seed` drives the forced-exploration schedule only.
pub fn build_policy(algo: Algo, problem: &Problem, params: &PolicyParams, seed: u64) -> Result<Box<dyn Policy>> {
    let Problem {
        kind,
        arms,
        dim,
        horizon,
        segments,
    } = *problem;
    if arms == 0 || horizon == 0 || dim == 0 {
        return Err(invalid("problem", "arms, dim and horizon must be positive"));
    }
    if algo.is_contextual() == (kind == ModelKind::Mab) {
        return Err(invalid(
            "algo",
            alloc::format!("`{algo}` does not apply to a {} environment", kind.name()),
        ));
    }
    let shared = kind == ModelKind::Joint;
    let (lambda, beta) = (params.lambda, params.beta);
    let segments = params.ucb_changes.unwrap_or(segments).max(1);
    let (xi, bound) = (params.ucb_xi, params.reward_bound);
    Ok(match algo {
        Algo::LinUcb => Box::new(LinUcb::new(arms, dim, shared, lambda, beta)?),
        Algo::SwLinUcb => {
            let w = params
                .sw_window
                .unwrap_or_else(|| default_sw_window(dim, horizon, params.budget));
            Box::new(LinUcb::with_forgetting(
                arms,
                dim,
                shared,
                lambda,
                beta,
                Forgetting::Window(w),
            )?)
        }
        Algo::DLinUcb => {
            let g = params
                .d_gamma
                .unwrap_or_else(|| default_d_gamma(dim, horizon, params.budget));
            Box::new(LinUcb::with_forgetting(
                arms,
                dim,
                shared,
                lambda,
                beta,
                Forgetting::Discount(g),
            )?)
        }
        Algo::MultiscaleLinUcb => {
            let cfg = params.detect_for(problem);
            Box::new(MultiscaleLinUcb::new(
                arms, dim, horizon, shared, lambda, beta, &cfg, seed,
            )?)
        }
        Algo::Ucb => Box::new(Ucb::new(arms, UcbVariant::Classic)?),
        Algo::SwUcb => {
            let window = params
                .sw_ucb_window
                .unwrap_or_else(|| default_sw_ucb_window(horizon, segments));
            Box::new(Ucb::new(arms, UcbVariant::SlidingWindow { window, xi, bound })?)
        }
        Algo::DUcb => {
            let gamma = params
                .d_ucb_gamma
                .unwrap_or_else(|| default_d_ucb_gamma(horizon, segments));
            Box::new(Ucb::new(arms, UcbVariant::Discounted { gamma, xi, bound })?)
        }
        Algo::MultiscaleUcb => Box::new(MultiscaleUcb::new(arms, horizon, &params.detect_for(problem))?),
    })
}
