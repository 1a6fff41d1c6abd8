use alloc::collections::VecDeque;
use alloc::vec::Vec;

use rand::{Rng, RngCore};

use super::linucb::argmax;
use super::{Alarm, Choice, Policy};
use crate::detect::{DetectConfig, DetectMode, Detector, Source};
use crate::env::Contexts;
use crate::error::{invalid, Result};

/// Pull count and running mean of one arm since its last reset.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct UcbArmState {
    pub count: usize,
    pub mean: f64,
}

impl UcbArmState {
    pub fn push(&mut self, y: f64) {
        self.count += 1;
        self.mean += (y - self.mean) / self.count as f64;
    }

    /// `mean + sqrt(2 log t / count)`, infinite for an unpulled arm.
    pub fn index(&self, t: usize) -> f64 {
        if self.count == 0 {
            return f64::INFINITY;
        }
        self.mean + libm::sqrt(2.0 * libm::log(t as f64) / self.count as f64)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum UcbVariant {
    Classic,
    /// Statistics over the last `window` rounds; width `bound sqrt(xi log min(t, window) / n)`.
    SlidingWindow {
        window: usize,
        xi: f64,
        bound: f64,
    },
    /// Discounted statistics; width `2 bound sqrt(xi log n_total / n)`.
    Discounted {
        gamma: f64,
        xi: f64,
        bound: f64,
    },
}

/// UCB and its sliding-window and discounted variants.
#[derive(Debug, Clone)]
pub struct Ucb {
    variant: UcbVariant,
    counts: Vec<f64>,
    sums: Vec<f64>,
    history: VecDeque<(usize, usize, f64)>,
}

impl Ucb {
    pub fn new(arms: usize, variant: UcbVariant) -> Result<Self> {
        match variant {
            UcbVariant::Classic => {}
            UcbVariant::SlidingWindow { window, xi, bound } => {
                if window == 0 {
                    return Err(invalid("window", "window must hold at least one round"));
                }
                if !(xi > 0.0 && bound > 0.0) {
                    return Err(invalid("xi", "width constants must be positive"));
                }
            }
            UcbVariant::Discounted { gamma, xi, bound } => {
                if !(gamma > 0.0 && gamma <= 1.0) {
                    return Err(invalid("gamma", "discount must lie in (0, 1]"));
                }
                if !(xi > 0.0 && bound > 0.0) {
                    return Err(invalid("xi", "width constants must be positive"));
                }
            }
        }
        Ok(Self {
            variant,
            counts: alloc::vec![0.0; arms],
            sums: alloc::vec![0.0; arms],
            history: VecDeque::new(),
        })
    }

    pub fn counts(&self) -> &[f64] {
        &self.counts
    }

    fn index(&self, arm: usize, t: usize) -> f64 {
        let n = self.counts[arm];
        if n <= 0.0 {
            return f64::INFINITY;
        }
        let mean = self.sums[arm] / n;
        let width = match self.variant {
            UcbVariant::Classic => libm::sqrt(2.0 * libm::log(t as f64) / n),
            UcbVariant::SlidingWindow { window, xi, bound } => {
                bound * libm::sqrt(xi * libm::log(t.min(window) as f64) / n)
            }
            UcbVariant::Discounted { xi, bound, .. } => {
                let total: f64 = self.counts.iter().sum();
                2.0 * bound * libm::sqrt(xi * libm::log(total).max(0.0) / n)
            }
        };
        mean + width
    }
}

impl Policy for Ucb {
    fn name(&self) -> &'static str {
        match self.variant {
            UcbVariant::Classic => "ucb",
            UcbVariant::SlidingWindow { .. } => "sw-ucb",
            UcbVariant::Discounted { .. } => "d-ucb",
        }
    }

    fn select(&mut self, t: usize, _contexts: &Contexts, _rng: &mut dyn RngCore) -> Choice {
        if let UcbVariant::SlidingWindow { window, .. } = self.variant {
            while self.history.front().is_some_and(|(s, _, _)| s + window < t) {
                let (_, arm, y) = self.history.pop_front().unwrap();
                self.counts[arm] -= 1.0;
                self.sums[arm] -= y;
            }
        }
        Choice {
            arm: argmax((0..self.counts.len()).map(|i| self.index(i, t))),
            forced: false,
        }
    }

    fn update(&mut self, t: usize, choice: Choice, _context: &[f64], reward: f64) -> Option<Alarm> {
        match self.variant {
            UcbVariant::Classic => {}
            UcbVariant::SlidingWindow { .. } => self.history.push_back((t, choice.arm, reward)),
            UcbVariant::Discounted { gamma, .. } => {
                self.counts.iter_mut().for_each(|c| *c *= gamma);
                self.sums.iter_mut().for_each(|s| *s *= gamma);
            }
        }
        self.counts[choice.arm] += 1.0;
        self.sums[choice.arm] += reward;
        None
    }
}

/// UCB with uniform exploration at rate `K alpha` and per-arm mean-shift detection.
#[derive(Debug, Clone)]
pub struct MultiscaleUcb {
    alpha: f64,
    states: Vec<UcbArmState>,
    detectors: Vec<Detector>,
}

impl MultiscaleUcb {
    pub fn new(arms: usize, horizon: usize, cfg: &DetectConfig) -> Result<Self> {
        cfg.validate()?;
        if arms as f64 * cfg.alpha >= 1.0 {
            return Err(invalid(
                "alpha",
                alloc::format!("K·alpha ≥ 1 (K={arms}, alpha={})", cfg.alpha),
            ));
        }
        Ok(Self {
            alpha: cfg.alpha,
            states: alloc::vec![UcbArmState::default(); arms],
            detectors: (0..arms)
                .map(|_| Detector::new(DetectMode::Mab, 1, horizon, cfg))
                .collect(),
        })
    }

    pub fn states(&self) -> &[UcbArmState] {
        &self.states
    }
}

impl Policy for MultiscaleUcb {
    fn name(&self) -> &'static str {
        "multiscale-ucb"
    }

    fn select(&mut self, t: usize, _contexts: &Contexts, rng: &mut dyn RngCore) -> Choice {
        let k = self.states.len();
        if t <= k {
            return Choice {
                arm: t - 1,
                forced: false,
            };
        }
        if rng.random::<f64>() < k as f64 * self.alpha {
            return Choice {
                arm: rng.random_range(0..k),
                forced: true,
            };
        }
        Choice {
            arm: argmax(self.states.iter().map(|s| s.index(t))),
            forced: false,
        }
    }

    fn update(&mut self, t: usize, choice: Choice, _context: &[f64], reward: f64) -> Option<Alarm> {
        let arm = choice.arm;
        self.states[arm].push(reward);
        let source = if choice.forced { Source::Forced } else { Source::Greedy };
        let result = self.detectors[arm].step(t, &[1.0], reward, source).ok()??;
        let mut fresh = UcbArmState::default();
        for o in self.detectors[arm].buffer().observations() {
            fresh.push(o.y);
        }
        self.states[arm] = fresh;
        Some(Alarm { arm: Some(arm), result })
    }
}
