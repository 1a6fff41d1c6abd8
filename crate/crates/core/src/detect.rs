//! Multiscale changepoint statistics over least-squares fits.
//!
//! For a buffer of observations `(x, y)` and a cut splitting it into a left
//! block `B1` and right block `B2`, the statistic is
//!
//! ```text
//! Z^2 = |X1 (th1 - th)|^2 + |X2 (th2 - th)|^2 = RSS(B1 u B2) - RSS(B1) - RSS(B2)
//! ```
//!
//! where `th1`, `th2`, `th` are the OLS fits on each block and on their union.
//! Everything is evaluated from [`SegmentStats`] (Gram matrix, moment vector,
//! response energy, count); the projection-matrix form only lives in tests.

use alloc::boxed::Box;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{invalid, Error, Result};
use crate::linalg;

/// Condition number above which a Gram matrix is treated as singular.
pub const DEFAULT_COND_LIMIT: f64 = 1e12;

/// Running sufficient statistics of one block of observations.
#[derive(Debug, Clone, PartialEq)]
pub struct SegmentStats {
    dim: usize,
    count: usize,
    gram: Vec<f64>,
    moment: Vec<f64>,
    energy: f64,
}

impl SegmentStats {
    pub fn new(dim: usize) -> Self {
        Self {
            dim,
            count: 0,
            gram: vec![0.0; dim * dim],
            moment: vec![0.0; dim],
            energy: 0.0,
        }
    }

    pub fn from_observations<'a, I>(dim: usize, obs: I) -> Self
    where
        I: IntoIterator<Item = (&'a [f64], f64)>,
    {
        let mut s = Self::new(dim);
        for (x, y) in obs {
            s.push(x, y);
        }
        s
    }

    pub fn push(&mut self, x: &[f64], y: f64) {
        debug_assert_eq!(x.len(), self.dim);
        linalg::rank_one_update(&mut self.gram, self.dim, x, 1.0);
        for (m, xi) in self.moment.iter_mut().zip(x) {
            *m += xi * y;
        }
        self.energy += y * y;
        self.count += 1;
    }

    /// Statistics of the union of two disjoint blocks.
    pub fn merge(&self, other: &Self) -> Self {
        let mut out = self.clone();
        out.merge_in(other);
        out
    }

    pub fn merge_in(&mut self, other: &Self) {
        assert_eq!(self.dim, other.dim, "merging blocks of different dimension");
        self.gram.iter_mut().zip(&other.gram).for_each(|(a, b)| *a += b);
        self.moment.iter_mut().zip(&other.moment).for_each(|(a, b)| *a += b);
        self.energy += other.energy;
        self.count += other.count;
    }

    /// Statistics of `self` with the sub-block `part` removed.
    pub(crate) fn difference(&self, part: &Self) -> Self {
        let mut out = self.clone();
        out.gram.iter_mut().zip(&part.gram).for_each(|(a, b)| *a -= b);
        out.moment.iter_mut().zip(&part.moment).for_each(|(a, b)| *a -= b);
        out.energy -= part.energy;
        out.count -= part.count;
        out
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn gram(&self) -> &[f64] {
        &self.gram
    }

    pub fn moment(&self) -> &[f64] {
        &self.moment
    }

    pub fn energy(&self) -> f64 {
        self.energy
    }
}

/// OLS estimate solving `gram * theta = moment`.
pub fn ols_fit(stats: &SegmentStats, cond_limit: f64) -> Result<Vec<f64>> {
    let p = stats.dim;
    if stats.count < p {
        return Err(Error::NotEstimable);
    }
    let l = linalg::cholesky(&stats.gram, p).ok_or(Error::NotEstimable)?;
    if linalg::cholesky_condition_estimate(&l, p) > cond_limit
        || !(linalg::symmetric_condition_number(&stats.gram, p) <= cond_limit)
    {
        return Err(Error::NotEstimable);
    }
    Ok(linalg::cholesky_solve(&l, p, &stats.moment))
}

/// Residual sum of squares of the OLS fit, clamped at zero.
pub fn rss(stats: &SegmentStats, cond_limit: f64) -> Result<f64> {
    let theta = ols_fit(stats, cond_limit)?;
    Ok((stats.energy - linalg::dot(&stats.moment, &theta)).max(0.0))
}

/// Two-block discrepancy statistic evaluated through the RSS identity.
pub fn z_squared(left: &SegmentStats, right: &SegmentStats, cond_limit: f64) -> Result<f64> {
    let merged = left.merge(right);
    let z = rss(&merged, cond_limit)? - rss(left, cond_limit)? - rss(right, cond_limit)?;
    Ok(z.max(0.0))
}

/// Signed mean-difference statistic for intercept-only designs.
pub fn z_mab(n1: usize, mean1: f64, n2: usize, mean2: f64) -> f64 {
    let (a, b) = (n1 as f64, n2 as f64);
    libm::sqrt(a * b / (a + b)) * (mean1 - mean2)
}

/// Practical threshold constant `C` for horizon `T`, `K` arms, dimension `p`.
pub fn default_c(horizon: usize, arms: usize, dim: usize) -> f64 {
    let log_t = libm::log(horizon as f64);
    let log_k = libm::log(arms as f64);
    let p = dim as f64;
    (1.0 + 2.0 * libm::sqrt((3.0 * log_t + log_k) / p) + (6.0 * log_t + 2.0 * log_k) / p) / log_t
}

/// Default forced-exploration probability `sqrt(log T / T)`.
pub fn default_alpha(horizon: usize) -> f64 {
    let t = horizon as f64;
    libm::sqrt(libm::log(t) / t)
}

fn scaled_difference(a: &[f64], wa: f64, b: &[f64], wb: f64) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| wa * x - wb * y).collect()
}

fn positive_semidefinite(m: &[f64], p: usize) -> bool {
    let trace: f64 = (0..p).map(|i| m[i * p + i].abs()).sum();
    let jitter = 1e-12 * (trace / p as f64).max(f64::MIN_POSITIVE);
    let mut shifted = m.to_vec();
    for i in 0..p {
        shifted[i * p + i] += jitter;
    }
    linalg::cholesky(&shifted, p).is_some()
}

/// Two-sided Gram sandwich `xi^-1 S2 <= S1 <= xi S2` on normalized Grams,
/// plus the minimum block size `min(n1, n2) >= p`.
pub fn gram_condition_check(left: &SegmentStats, right: &SegmentStats, xi: f64, p: usize) -> bool {
    if left.count.min(right.count) < p || left.count == 0 {
        return false;
    }
    let d = left.dim;
    let s1: Vec<f64> = left.gram.iter().map(|g| g / left.count as f64).collect();
    let s2: Vec<f64> = right.gram.iter().map(|g| g / right.count as f64).collect();
    if linalg::cholesky(&s1, d).is_none() || linalg::cholesky(&s2, d).is_none() {
        return false;
    }
    positive_semidefinite(&scaled_difference(&s2, xi, &s1, 1.0), d)
        && positive_semidefinite(&scaled_difference(&s1, xi, &s2, 1.0), d)
}

/// Which statistic and threshold a scan uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum DetectMode {
    /// Least-squares statistic against `C p log T`, with the Gram check.
    Contextual,
    /// Mean-difference statistic against `6 log T`.
    Mab,
}

/// Which cut points are examined.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum CutGrid {
    /// Every boundary between consecutive buffered observations.
    #[default]
    All,
    /// Only cuts whose right block holds 1, 2, 4, 8, ... observations.
    Geometric,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DetectConfig {
    /// Threshold constant `C` in `C p log T`.
    pub c: f64,
    /// Gram-condition constant in `(1, 2)`.
    pub xi: f64,
    /// Forced-exploration probability.
    pub alpha: f64,
    /// Feed greedy pulls to the detector as well as forced ones.
    pub use_all_pulls: bool,
    /// Rebase at the cut and keep the observations after it.
    pub reuse_tail: bool,
    /// Minimum block size; `None` means `p` (contextual) or 1 (multi-armed).
    pub min_block: Option<usize>,
    pub cond_limit: f64,
    pub cut_grid: CutGrid,
    /// Require the Gram sandwich before firing (contextual mode).
    pub gram_check: bool,
}

impl DetectConfig {
    pub const DEFAULT_XI: f64 = 1.5;

    pub fn for_problem(horizon: usize, arms: usize, dim: usize) -> Self {
        Self {
            c: default_c(horizon, arms, dim),
            xi: Self::DEFAULT_XI,
            alpha: default_alpha(horizon),
            use_all_pulls: true,
            reuse_tail: true,
            min_block: None,
            cond_limit: DEFAULT_COND_LIMIT,
            cut_grid: CutGrid::All,
            gram_check: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.xi > 1.0 && self.xi < 2.0) {
            return Err(invalid("xi", "xi must lie in (1,2)"));
        }
        if !(self.c > 0.0) {
            return Err(invalid("c", "C must be positive"));
        }
        if !(self.alpha >= 0.0) {
            return Err(invalid("alpha", "alpha must be non-negative"));
        }
        if self.min_block == Some(0) {
            return Err(invalid("min_block", "minimum block size must be at least 1"));
        }
        if !(self.cond_limit > 1.0) {
            return Err(invalid("cond_limit", "condition limit must exceed 1"));
        }
        Ok(())
    }

    pub fn min_block_for(&self, mode: DetectMode, dim: usize) -> usize {
        self.min_block.unwrap_or(match mode {
            DetectMode::Contextual => dim,
            DetectMode::Mab => 1,
        })
    }

    /// Whether a split may fire, as far as the Gram condition goes.
    pub fn admissible(&self, left: &SegmentStats, right: &SegmentStats) -> bool {
        !self.gram_check || gram_condition_check(left, right, self.xi, left.dim)
    }

    pub fn threshold(&self, mode: DetectMode, horizon: usize, dim: usize) -> f64 {
        let log_t = libm::log(horizon as f64);
        match mode {
            DetectMode::Contextual => self.c * dim as f64 * log_t,
            DetectMode::Mab => 6.0 * log_t,
        }
    }
}

/// Why an observation entered the detection buffer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Source {
    Forced,
    Greedy,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    pub t: usize,
    pub x: Vec<f64>,
    pub y: f64,
    pub source: Source,
}

/// Detection-eligible observations since the last detected changepoint.
#[derive(Debug, Clone, PartialEq)]
pub struct DetectionBuffer {
    dim: usize,
    last_change: usize,
    obs: Vec<Observation>,
}

impl DetectionBuffer {
    pub fn new(dim: usize) -> Self {
        Self {
            dim,
            last_change: 1,
            obs: Vec::new(),
        }
    }

    pub fn push(&mut self, obs: Observation) -> Result<()> {
        if obs.x.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: obs.x.len(),
            });
        }
        let after_last = self.obs.last().is_none_or(|o| o.t < obs.t);
        if !after_last || obs.t < self.last_change {
            return Err(invalid(
                "round",
                "buffer rounds must increase and follow the last change",
            ));
        }
        self.obs.push(obs);
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn last_change(&self) -> usize {
        self.last_change
    }

    pub fn observations(&self) -> &[Observation] {
        &self.obs
    }

    pub fn len(&self) -> usize {
        self.obs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.obs.is_empty()
    }

    /// Restarts at `change`, keeping observations from index `keep_from` on.
    pub fn rebase(&mut self, change: usize, keep_from: usize) {
        self.obs.drain(..keep_from.min(self.obs.len()));
        self.obs.retain(|o| o.t >= change);
        self.last_change = change;
    }

    pub fn stats(&self, range: core::ops::Range<usize>) -> SegmentStats {
        SegmentStats::from_observations(self.dim, self.obs[range].iter().map(|o| (o.x.as_slice(), o.y)))
    }
}

/// An alarm: the scan found a cut whose statistic reached the threshold.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetectionResult {
    /// First round of the right block.
    pub cut: usize,
    /// Round at which the alarm was raised.
    pub alarm: usize,
    pub z_squared: f64,
    pub threshold: f64,
}

/// Cut indices `k` (left block `obs[..k]`) examined for a buffer of `n`.
pub fn cut_indices(n: usize, min_block: usize, grid: CutGrid) -> Vec<usize> {
    if n < 2 * min_block {
        return Vec::new();
    }
    let (lo, hi) = (min_block, n - min_block);
    match grid {
        CutGrid::All => (lo..=hi).collect(),
        CutGrid::Geometric => {
            let mut out = Vec::new();
            let mut lag = 1usize;
            while lag <= n {
                let k = n - lag;
                if k >= lo && k <= hi {
                    out.push(k);
                }
                lag *= 2;
            }
            out.reverse();
            out
        }
    }
}

/// Scans every admissible cut of `buffer` in increasing order and returns the
/// first one that fires. Recomputes all statistics from the buffer.
pub fn scan(
    buffer: &DetectionBuffer,
    cfg: &DetectConfig,
    horizon: usize,
    now: usize,
    mode: DetectMode,
) -> Option<DetectionResult> {
    scan_indexed(buffer, cfg, horizon, now, mode).map(|(_, r)| r)
}

pub(crate) fn scan_indexed(
    buffer: &DetectionBuffer,
    cfg: &DetectConfig,
    horizon: usize,
    now: usize,
    mode: DetectMode,
) -> Option<(usize, DetectionResult)> {
    let dim = buffer.dim;
    let n = buffer.len();
    let threshold = cfg.threshold(mode, horizon, dim);
    let min_block = cfg.min_block_for(mode, dim);
    let obs = buffer.observations();
    let mut left = SegmentStats::new(dim);
    let mut next = 0;
    for k in cut_indices(n, min_block, cfg.cut_grid) {
        while next < k {
            left.push(&obs[next].x, obs[next].y);
            next += 1;
        }
        let right = buffer.stats(k..n);
        let z = match mode {
            DetectMode::Mab => {
                let m1 = left.moment[0] / left.count as f64;
                let m2 = right.moment[0] / right.count as f64;
                let z = z_mab(left.count, m1, right.count, m2);
                z * z
            }
            DetectMode::Contextual => match z_squared(&left, &right, cfg.cond_limit) {
                Ok(z) if z >= threshold && cfg.admissible(&left, &right) => z,
                _ => continue,
            },
        };
        if z >= threshold {
            return Some((
                k,
                DetectionResult {
                    cut: obs[k].t,
                    alarm: now,
                    z_squared: z,
                    threshold,
                },
            ));
        }
    }
    None
}

/// Recursive least-squares state for every suffix of the buffer.
///
/// Suffix `s` covers `obs[s..]`. Until its Gram matrix is invertible it keeps
/// raw sufficient statistics; afterwards it carries the inverse Gram, the
/// current fit and its residual sum of squares, updated in `O(p^2)` per row.
#[derive(Debug, Clone)]
struct SuffixBank {
    dim: usize,
    cond_limit: f64,
    ready: Vec<bool>,
    count: Vec<usize>,
    // gram while accumulating, inverse gram once ready
    mats: Vec<f64>,
    // moment while accumulating, fit once ready
    vecs: Vec<f64>,
    // energy while accumulating, RSS once ready
    scalars: Vec<f64>,
    scratch: Vec<f64>,
}

impl SuffixBank {
    fn new(dim: usize, cond_limit: f64) -> Self {
        Self {
            dim,
            cond_limit,
            ready: Vec::new(),
            count: Vec::new(),
            mats: Vec::new(),
            vecs: Vec::new(),
            scalars: Vec::new(),
            scratch: vec![0.0; dim],
        }
    }

    fn len(&self) -> usize {
        self.ready.len()
    }

    fn rss(&self, s: usize) -> f64 {
        if self.ready[s] {
            self.scalars[s].max(0.0)
        } else {
            f64::NAN
        }
    }

    fn push(&mut self, x: &[f64], y: f64) {
        let p = self.dim;
        self.ready.push(false);
        self.count.push(0);
        self.mats.extend(core::iter::repeat_n(0.0, p * p));
        self.vecs.extend(core::iter::repeat_n(0.0, p));
        self.scalars.push(0.0);
        for s in 0..self.len() {
            self.update(s, x, y);
        }
    }

    fn update(&mut self, s: usize, x: &[f64], y: f64) {
        let p = self.dim;
        let mat = &mut self.mats[s * p * p..(s + 1) * p * p];
        let v = &mut self.vecs[s * p..(s + 1) * p];
        self.count[s] += 1;
        if self.ready[s] {
            let px = &mut self.scratch;
            linalg::mat_vec(mat, p, x, px);
            let denom = 1.0 + linalg::dot(x, px);
            let err = y - linalg::dot(x, v);
            self.scalars[s] += err * err / denom;
            let gain = err / denom;
            for (vi, pxi) in v.iter_mut().zip(px.iter()) {
                *vi += gain * pxi;
            }
            linalg::rank_one_update(mat, p, px, -1.0 / denom);
            return;
        }
        linalg::rank_one_update(mat, p, x, 1.0);
        for (vi, xi) in v.iter_mut().zip(x) {
            *vi += xi * y;
        }
        self.scalars[s] += y * y;
        if self.count[s] >= p {
            let Some(l) = linalg::cholesky(mat, p) else { return };
            if linalg::cholesky_condition_estimate(&l, p) > self.cond_limit {
                return;
            }
            let theta = linalg::cholesky_solve(&l, p, v);
            let rss = self.scalars[s] - linalg::dot(v, &theta);
            mat.copy_from_slice(&linalg::cholesky_inverse(&l, p));
            v.copy_from_slice(&theta);
            self.scalars[s] = rss;
            self.ready[s] = true;
        }
    }
}

#[derive(Debug, Clone)]
enum Backend {
    Recursive {
        bank: Box<SuffixBank>,
        prefix_rss: Vec<f64>,
        total: SegmentStats,
    },
    Means {
        prefix_sum: Vec<f64>,
    },
}

/// Online detector for one arm (or one shared model): buffers observations,
/// scans for a changepoint and rebases itself after an alarm.
#[derive(Debug, Clone)]
pub struct Detector {
    mode: DetectMode,
    horizon: usize,
    cfg: DetectConfig,
    threshold: f64,
    min_block: usize,
    buffer: DetectionBuffer,
    backend: Backend,
}

impl Detector {
    pub fn new(mode: DetectMode, dim: usize, horizon: usize, cfg: &DetectConfig) -> Self {
        let threshold = cfg.threshold(mode, horizon, dim);
        let min_block = cfg.min_block_for(mode, dim);
        let mut d = Self {
            mode,
            horizon,
            cfg: cfg.clone(),
            threshold,
            min_block,
            buffer: DetectionBuffer::new(dim),
            backend: Backend::Means { prefix_sum: Vec::new() },
        };
        d.reset_backend();
        d
    }

    fn reset_backend(&mut self) {
        let dim = self.buffer.dim;
        self.backend = match self.mode {
            DetectMode::Mab => Backend::Means { prefix_sum: vec![0.0] },
            DetectMode::Contextual => Backend::Recursive {
                bank: Box::new(SuffixBank::new(dim, self.cfg.cond_limit)),
                prefix_rss: vec![f64::NAN],
                total: SegmentStats::new(dim),
            },
        };
    }

    fn ingest(&mut self, x: &[f64], y: f64) {
        match &mut self.backend {
            Backend::Means { prefix_sum } => {
                let last = *prefix_sum.last().unwrap();
                prefix_sum.push(last + y);
            }
            Backend::Recursive {
                bank,
                prefix_rss,
                total,
            } => {
                bank.push(x, y);
                total.push(x, y);
                prefix_rss.push(bank.rss(0));
            }
        }
    }

    pub fn buffer(&self) -> &DetectionBuffer {
        &self.buffer
    }

    pub fn threshold(&self) -> f64 {
        self.threshold
    }

    pub fn mode(&self) -> DetectMode {
        self.mode
    }

    /// Appends one observation.
    pub fn observe(&mut self, t: usize, x: &[f64], y: f64, source: Source) -> Result<()> {
        self.buffer.push(Observation {
            t,
            x: x.to_vec(),
            y,
            source,
        })?;
        self.ingest(x, y);
        Ok(())
    }

    /// First firing cut at round `now`, with its buffer index.
    pub fn scan(&self, now: usize) -> Option<(usize, DetectionResult)> {
        let n = self.buffer.len();
        let cuts = cut_indices(n, self.min_block, self.cfg.cut_grid);
        if cuts.is_empty() {
            return None;
        }
        let obs = self.buffer.observations();
        let fire = |k: usize, z: f64| {
            (
                k,
                DetectionResult {
                    cut: obs[k].t,
                    alarm: now,
                    z_squared: z,
                    threshold: self.threshold,
                },
            )
        };
        match &self.backend {
            Backend::Means { prefix_sum } => {
                let total = prefix_sum[n];
                cuts.into_iter().find_map(|k| {
                    let m1 = prefix_sum[k] / k as f64;
                    let m2 = (total - prefix_sum[k]) / (n - k) as f64;
                    let z = z_mab(k, m1, n - k, m2);
                    (z * z >= self.threshold).then(|| fire(k, z * z))
                })
            }
            Backend::Recursive {
                bank,
                prefix_rss,
                total,
            } => {
                let full = bank.rss(0);
                if full.is_nan() {
                    return None;
                }
                let dim = self.buffer.dim;
                let mut left = SegmentStats::new(dim);
                let mut next = 0;
                for k in cuts {
                    let z = full - prefix_rss[k] - bank.rss(k);
                    // NaN (not estimable) compares false
                    if !(z >= self.threshold) {
                        continue;
                    }
                    while next < k {
                        left.push(&obs[next].x, obs[next].y);
                        next += 1;
                    }
                    let right = total.difference(&left);
                    if !self.cfg.admissible(&left, &right) {
                        continue;
                    }
                    match z_squared(&left, &right, self.cfg.cond_limit) {
                        Ok(exact) if exact >= self.threshold => return Some(fire(k, exact)),
                        _ => continue,
                    }
                }
                None
            }
        }
    }

    /// Rebases after an alarm at buffer index `k`.
    pub fn rebase(&mut self, k: usize, result: &DetectionResult) {
        if self.cfg.reuse_tail {
            self.buffer.rebase(result.cut, k);
        } else {
            let n = self.buffer.len();
            self.buffer.rebase(result.alarm, n);
        }
        self.reset_backend();
        let tail: Vec<(Vec<f64>, f64)> = self.buffer.observations().iter().map(|o| (o.x.clone(), o.y)).collect();
        for (x, y) in tail {
            self.ingest(&x, y);
        }
    }

    /// Observes, scans and rebases on alarm.
    pub fn step(&mut self, t: usize, x: &[f64], y: f64, source: Source) -> Result<Option<DetectionResult>> {
        self.observe(t, x, y, source)?;
        Ok(self.scan_and_rebase(t))
    }

    pub fn scan_and_rebase(&mut self, now: usize) -> Option<DetectionResult> {
        let (k, result) = self.scan(now)?;
        self.rebase(k, &result);
        Some(result)
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }
}
