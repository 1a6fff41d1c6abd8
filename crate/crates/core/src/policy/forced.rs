use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{invalid, Result};

/// Rounds reserved for forced exploration, at most one arm per round.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ForcedSchedule {
    slots: Vec<Option<u32>>,
}

impl ForcedSchedule {
    pub fn empty(horizon: usize) -> Self {
        Self {
            slots: alloc::vec![None; horizon],
        }
    }

    /// Arm forced at round `t` (1-based), if any.
    pub fn at(&self, t: usize) -> Option<usize> {
        self.slots.get(t.wrapping_sub(1)).copied().flatten().map(|a| a as usize)
    }

    pub fn horizon(&self) -> usize {
        self.slots.len()
    }

    pub fn count(&self, arm: usize) -> usize {
        self.slots.iter().filter(|s| **s == Some(arm as u32)).count()
    }

    pub fn total(&self) -> usize {
        self.slots.iter().filter(|s| s.is_some()).count()
    }
}

/// Labels each round with arm `i` with probability `alpha` for every arm, and
/// with no arm with probability `1 - K alpha`.
pub fn preselect(horizon: usize, arms: usize, alpha: f64, seed: u64) -> Result<ForcedSchedule> {
    if !(alpha >= 0.0) || arms as f64 * alpha >= 1.0 {
        return Err(invalid(
            "alpha",
            alloc::format!("K·alpha ≥ 1 (K={arms}, alpha={alpha})"),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let slots = (0..horizon)
        .map(|_| {
            let u: f64 = rng.random();
            let arm = (u / alpha) as usize;
            (alpha > 0.0 && arm < arms).then_some(arm as u32)
        })
        .collect();
    Ok(ForcedSchedule { slots })
}

/// Shared schedule for the joint model: each round is forced with probability
/// `alpha`, and a forced round pulls a uniformly drawn arm.
pub fn preselect_shared(horizon: usize, arms: usize, alpha: f64, seed: u64) -> Result<ForcedSchedule> {
    if !(0.0..1.0).contains(&alpha) {
        return Err(invalid("alpha", "alpha must lie in [0, 1)"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let slots = (0..horizon)
        .map(|_| {
            let forced = rng.random::<f64>() < alpha;
            let arm = rng.random_range(0..arms) as u32;
            forced.then_some(arm)
        })
        .collect();
    Ok(ForcedSchedule { slots })
}
