//! Replicated runs over seeds and algorithms.

use anyhow::{bail, Context};
use msbandit_core::env::Environment;
use msbandit_core::harness::{
    aggregate, derived_seed, detection_report_with, run, Curve, DetectionReport, Stream, Trace,
};
use msbandit_core::policy::{build_policy, Algo, Problem};
use rayon::prelude::*;

use crate::config::ExperimentConfig;

/// One (algorithm, seed) run.
#[derive(Debug, Clone)]
pub struct RunResult {
    pub algo: Algo,
    pub seed: u64,
    pub trace: Trace,
    pub report: DetectionReport,
}

#[derive(Debug, Clone)]
pub struct Outcome {
    pub digest: String,
    pub curves: Vec<Curve>,
    /// Ordered by algorithm (config order), then seed.
    pub runs: Vec<RunResult>,
    /// One environment per seed, in seed order.
    pub envs: Vec<(u64, Environment)>,
}

impl Outcome {
    pub fn runs_of(&self, algo: Algo) -> impl Iterator<Item = &RunResult> {
        self.runs.iter().filter(move |r| r.algo == algo)
    }
}

pub fn problem_of(env: &Environment) -> Problem {
    Problem {
        kind: env.kind(),
        arms: env.arms(),
        dim: env.dim(),
        horizon: env.horizon(),
        segments: env.distinct_segments(),
    }
}

/// Runs one algorithm on one seed's environment.
pub fn run_one(cfg: &ExperimentConfig, env: &Environment, algo: Algo, seed: u64) -> anyhow::Result<RunResult> {
    let problem = problem_of(env);
    let params = cfg.policy_params(&problem);
    let mut policy = build_policy(algo, &problem, &params, derived_seed(seed, Stream::Schedule))?;
    let trace = run(env, policy.as_mut(), seed)?;
    let report = detection_report_with(&trace, env, cfg.match_rule());
    Ok(RunResult {
        algo,
        seed,
        trace,
        report,
    })
}

/// Seeds `seed .. seed + reps`; every algorithm sees the same environment and
/// the same context and noise streams for a given seed. Results do not depend
/// on `jobs`.
pub fn replicate(cfg: &ExperimentConfig, jobs: usize) -> anyhow::Result<Outcome> {
    let violations = cfg.violations();
    if !violations.is_empty() {
        let lines: Vec<String> = violations.iter().map(|v| v.to_string()).collect();
        bail!("invalid configuration:\n  {}", lines.join("\n  "));
    }
    let pool = rayon::ThreadPoolBuilder::new().num_threads(jobs.max(1)).build()?;
    let seeds: Vec<u64> = (0..cfg.reps as u64).map(|i| cfg.seed.wrapping_add(i)).collect();
    let algos = cfg.algos();
    pool.install(|| {
        let envs: Vec<(u64, Environment)> = seeds
            .par_iter()
            .map(|&s| {
                let env = cfg
                    .environment(derived_seed(s, Stream::Environment))
                    .with_context(|| format!("building environment for seed {s}"))?;
                Ok((s, env))
            })
            .collect::<anyhow::Result<_>>()?;
        let tasks: Vec<(Algo, usize)> = algos
            .iter()
            .flat_map(|&a| (0..envs.len()).map(move |i| (a, i)))
            .collect();
        let runs: Vec<RunResult> = tasks
            .par_iter()
            .map(|&(a, i)| {
                let (seed, env) = &envs[i];
                run_one(cfg, env, a, *seed).with_context(|| format!("{a} seed {seed}"))
            })
            .collect::<anyhow::Result<_>>()?;
        let curves = algos
            .iter()
            .map(|&a| {
                let per_seed: Vec<Vec<f64>> = runs
                    .iter()
                    .filter(|r| r.algo == a)
                    .map(|r| r.trace.cumulative_regret())
                    .collect();
                Ok(aggregate(a.name(), &per_seed)?)
            })
            .collect::<anyhow::Result<_>>()?;
        Ok(Outcome {
            digest: cfg.digest(),
            curves,
            runs,
            envs,
        })
    })
}
