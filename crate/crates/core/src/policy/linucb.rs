use alloc::collections::VecDeque;
use alloc::vec::Vec;

use rand::RngCore;

use super::forced::{preselect, preselect_shared, ForcedSchedule};
use super::ridge::{RidgeArmState, RidgeFit};
use super::{Alarm, Choice, Policy};
use crate::detect::{DetectConfig, DetectMode, Detector, Source};
use crate::env::Contexts;
use crate::error::{invalid, Result};

/// Disjoint LinUCB choice: argmax of `x^T theta_i + beta sqrt(x^T A_i^-1 x)`.
///
/// A single state is shared by every arm (joint model); otherwise state `i`
/// belongs to arm `i`. Ties go to the lowest arm index.
pub fn linucb_select(states: &[RidgeArmState], contexts: &Contexts, beta: f64) -> usize {
    let fits: Vec<RidgeFit> = states.iter().map(RidgeArmState::fit).collect();
    argmax((0..contexts.arms()).map(|i| {
        let fit = &fits[if states.len() == 1 { 0 } else { i }];
        let x = contexts.arm(i);
        fit.mean(x) + beta * fit.width(x)
    }))
}

pub(crate) fn argmax(values: impl Iterator<Item = f64>) -> usize {
    let mut best = 0;
    let mut best_val = f64::NEG_INFINITY;
    for (i, v) in values.enumerate() {
        if v > best_val || (i == 0 && v.is_nan()) {
            best = i;
            best_val = v;
        }
    }
    best
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Forgetting {
    None,
    /// Keep only observations from the last `n` rounds.
    Window(usize),
    /// Geometric down-weighting by `gamma` per round.
    Discount(f64),
}

/// LinUCB with optional sliding-window or discounted statistics.
#[derive(Debug, Clone)]
pub struct LinUcb {
    name: &'static str,
    arms: usize,
    beta: f64,
    models: Vec<RidgeArmState>,
    forgetting: Forgetting,
    history: Vec<VecDeque<(usize, Vec<f64>, f64)>>,
    // gamma^2-discounted twin used by the discounted confidence width
    squared: Vec<RidgeArmState>,
}

impl LinUcb {
    pub fn new(arms: usize, dim: usize, shared: bool, lambda: f64, beta: f64) -> Result<Self> {
        Self::with_forgetting(arms, dim, shared, lambda, beta, Forgetting::None)
    }

    pub fn with_forgetting(
        arms: usize,
        dim: usize,
        shared: bool,
        lambda: f64,
        beta: f64,
        forgetting: Forgetting,
    ) -> Result<Self> {
        if !(lambda > 0.0) {
            return Err(invalid("lambda", "ridge lambda must be positive"));
        }
        if !(beta >= 0.0) {
            return Err(invalid("beta", "exploration scale must be non-negative"));
        }
        let name = match forgetting {
            Forgetting::None => "linucb",
            Forgetting::Window(w) => {
                if w == 0 {
                    return Err(invalid("window", "window must hold at least one round"));
                }
                "sw-linucb"
            }
            Forgetting::Discount(g) => {
                if !(g > 0.0 && g <= 1.0) {
                    return Err(invalid("gamma", "discount must lie in (0, 1]"));
                }
                "d-linucb"
            }
        };
        let n = if shared { 1 } else { arms };
        let models = alloc::vec![RidgeArmState::new(dim, lambda); n];
        let squared = match forgetting {
            Forgetting::Discount(g) if g < 1.0 => models.clone(),
            _ => Vec::new(),
        };
        Ok(Self {
            name,
            arms,
            beta,
            models,
            forgetting,
            history: alloc::vec![VecDeque::new(); n],
            squared,
        })
    }

    fn model_of(&self, arm: usize) -> usize {
        if self.models.len() == 1 {
            0
        } else {
            arm
        }
    }

    pub fn models(&self) -> &[RidgeArmState] {
        &self.models
    }

    pub fn arms(&self) -> usize {
        self.arms
    }

    fn expire(&mut self, t: usize) {
        if let Forgetting::Window(w) = self.forgetting {
            for (model, hist) in self.models.iter_mut().zip(&mut self.history) {
                while hist.front().is_some_and(|(s, _, _)| s + w < t) {
                    let (_, x, y) = hist.pop_front().unwrap();
                    model.remove(&x, y);
                }
            }
        }
    }

    pub fn select_arm(&mut self, t: usize, contexts: &Contexts) -> usize {
        self.expire(t);
        if self.squared.is_empty() {
            return linucb_select(&self.models, contexts, self.beta);
        }
        let fits: Vec<RidgeFit> = self.models.iter().map(RidgeArmState::fit).collect();
        argmax((0..contexts.arms()).map(|i| {
            let m = self.model_of(i);
            let x = contexts.arm(i);
            fits[m].mean(x) + self.beta * fits[m].sandwich_width(x, self.squared[m].matrix())
        }))
    }

    pub fn learn(&mut self, t: usize, arm: usize, x: &[f64], y: f64) {
        let m = self.model_of(arm);
        match self.forgetting {
            Forgetting::None => {}
            Forgetting::Window(_) => self.history[m].push_back((t, x.to_vec(), y)),
            Forgetting::Discount(g) => {
                self.models.iter_mut().for_each(|s| s.discount(g));
                self.squared.iter_mut().for_each(|s| s.discount(g * g));
                if let Some(s) = self.squared.get_mut(m) {
                    s.add(x, y);
                }
            }
        }
        self.models[m].add(x, y);
    }

    /// Fresh state for model `m`, refilled with the given observations.
    pub fn reset_model<'a>(&mut self, m: usize, since: usize, tail: impl Iterator<Item = (&'a [f64], f64)>) {
        self.models[m].reset(since);
        for (x, y) in tail {
            self.models[m].add(x, y);
        }
    }
}

impl Policy for LinUcb {
    fn name(&self) -> &'static str {
        self.name
    }

    fn select(&mut self, t: usize, contexts: &Contexts, _rng: &mut dyn RngCore) -> Choice {
        Choice {
            arm: self.select_arm(t, contexts),
            forced: false,
        }
    }

    fn update(&mut self, t: usize, choice: Choice, context: &[f64], reward: f64) -> Option<Alarm> {
        self.learn(t, choice.arm, context, reward);
        None
    }
}

/// LinUCB restarted by multiscale changepoint detection, with forced
/// exploration rounds feeding the detectors.
#[derive(Debug, Clone)]
pub struct MultiscaleLinUcb {
    base: LinUcb,
    detectors: Vec<Detector>,
    forced: ForcedSchedule,
    use_all_pulls: bool,
}

impl MultiscaleLinUcb {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        arms: usize,
        dim: usize,
        horizon: usize,
        shared: bool,
        lambda: f64,
        beta: f64,
        cfg: &DetectConfig,
        seed: u64,
    ) -> Result<Self> {
        cfg.validate()?;
        let forced = if shared {
            if arms as f64 * cfg.alpha >= 1.0 {
                return Err(invalid(
                    "alpha",
                    alloc::format!("K·alpha ≥ 1 (K={arms}, alpha={})", cfg.alpha),
                ));
            }
            preselect_shared(horizon, arms, cfg.alpha, seed)?
        } else {
            preselect(horizon, arms, cfg.alpha, seed)?
        };
        let base = LinUcb::new(arms, dim, shared, lambda, beta)?;
        let detectors = (0..base.models.len())
            .map(|_| Detector::new(DetectMode::Contextual, dim, horizon, cfg))
            .collect();
        Ok(Self {
            base,
            detectors,
            forced,
            use_all_pulls: cfg.use_all_pulls,
        })
    }

    pub fn forced(&self) -> &ForcedSchedule {
        &self.forced
    }

    pub fn base(&self) -> &LinUcb {
        &self.base
    }

    pub fn detectors(&self) -> &[Detector] {
        &self.detectors
    }
}

impl Policy for MultiscaleLinUcb {
    fn name(&self) -> &'static str {
        "multiscale-linucb"
    }

    fn select(&mut self, t: usize, contexts: &Contexts, _rng: &mut dyn RngCore) -> Choice {
        match self.forced.at(t) {
            Some(arm) => Choice { arm, forced: true },
            None => Choice {
                arm: self.base.select_arm(t, contexts),
                forced: false,
            },
        }
    }

    fn update(&mut self, t: usize, choice: Choice, context: &[f64], reward: f64) -> Option<Alarm> {
        self.base.learn(t, choice.arm, context, reward);
        if !(choice.forced || self.use_all_pulls) {
            return None;
        }
        let m = self.base.model_of(choice.arm);
        let source = if choice.forced { Source::Forced } else { Source::Greedy };
        let det = &mut self.detectors[m];
        det.observe(t, context, reward, source).ok()?;
        let result = det.scan_and_rebase(t)?;
        let buf = det.buffer();
        self.base.reset_model(
            m,
            buf.last_change(),
            buf.observations().iter().map(|o| (o.x.as_slice(), o.y)),
        );
        let shared = self.base.models.len() == 1;
        Some(Alarm {
            arm: (!shared).then_some(m),
            result,
        })
    }
}
