//! Simulation loop, regret accounting and detection bookkeeping.

use alloc::string::String;
use alloc::vec::Vec;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::detect::DetectionResult;
use crate::env::{Environment, ModelKind, NoiseModel};
use crate::error::{Error, Result};
use crate::policy::{Alarm, Policy};

/// Independent random streams of one replicate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stream {
    Contexts = 0,
    Noise = 1,
    Policy = 2,
    Schedule = 3,
    Environment = 4,
}

pub fn stream_rng(seed: u64, stream: Stream) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream as u64);
    rng
}

/// Seed for a derived stream, e.g. the forced schedule or a redrawn environment.
pub fn derived_seed(seed: u64, stream: Stream) -> u64 {
    stream_rng(seed, stream).next_u64()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RoundRecord {
    pub t: usize,
    pub arm: usize,
    pub reward: f64,
    pub oracle_mean: f64,
    pub chosen_mean: f64,
    pub forced: bool,
    pub alarm: bool,
}

impl RoundRecord {
    pub fn regret(&self) -> f64 {
        self.oracle_mean - self.chosen_mean
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AlarmEvent {
    pub arm: Option<usize>,
    pub result: DetectionResult,
}

impl From<Alarm> for AlarmEvent {
    fn from(a: Alarm) -> Self {
        Self {
            arm: a.arm,
            result: a.result,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    pub algo: String,
    pub seed: u64,
    pub records: Vec<RoundRecord>,
    pub alarms: Vec<AlarmEvent>,
}

impl Trace {
    pub fn horizon(&self) -> usize {
        self.records.len()
    }

    pub fn cumulative_regret(&self) -> Vec<f64> {
        self.records
            .iter()
            .scan(0.0, |acc, r| {
                *acc += r.regret();
                Some(*acc)
            })
            .collect()
    }

    pub fn final_regret(&self) -> f64 {
        self.records.iter().map(RoundRecord::regret).sum()
    }
}

/// Plays `policy` against `env` for the full horizon.
pub fn run<N: NoiseModel>(env: &Environment<N>, policy: &mut dyn Policy, seed: u64) -> Result<Trace> {
    let mut ctx_rng = stream_rng(seed, Stream::Contexts);
    let mut noise_rng = stream_rng(seed, Stream::Noise);
    let mut policy_rng = stream_rng(seed, Stream::Policy);
    let mut records = Vec::with_capacity(env.horizon());
    let mut alarms = Vec::new();
    for t in 1..=env.horizon() {
        let (contexts, oracle) = env.sample_round(t, &mut ctx_rng)?;
        let choice = policy.select(t, &contexts, &mut policy_rng);
        if choice.arm >= env.arms() {
            return Err(Error::ArmOutOfRange {
                arm: choice.arm,
                arms: env.arms(),
            });
        }
        let x = contexts.arm(choice.arm);
        let reward = env.draw_reward(t, choice.arm, x, &mut noise_rng)?;
        let alarm = policy.update(t, choice, x, reward);
        records.push(RoundRecord {
            t,
            arm: choice.arm,
            reward,
            oracle_mean: oracle.best_mean,
            chosen_mean: oracle.means[choice.arm],
            forced: choice.forced,
            alarm: alarm.is_some(),
        });
        alarms.extend(alarm.map(AlarmEvent::from));
    }
    Ok(Trace {
        algo: String::from(policy.name()),
        seed,
        records,
        alarms,
    })
}

/// Outcome for one true changepoint.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ChangeOutcome {
    /// `None` when the schedule is shared by all arms.
    pub arm: Option<usize>,
    pub changepoint: usize,
    pub detected: bool,
    /// Alarm round minus changepoint round.
    pub delay: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct DetectionReport {
    pub changes: Vec<ChangeOutcome>,
    pub matched_alarms: usize,
    pub false_alarms: usize,
    /// False alarms per schedule (one entry for a shared schedule).
    pub false_alarms_by_arm: Vec<usize>,
}

impl DetectionReport {
    pub fn total_alarms(&self) -> usize {
        self.matched_alarms + self.false_alarms
    }

    pub fn detected(&self) -> usize {
        self.changes.iter().filter(|c| c.detected).count()
    }

    pub fn delays(&self) -> impl Iterator<Item = usize> + '_ {
        self.changes.iter().filter_map(|c| c.delay)
    }
}

/// Which round of an alarm is compared with the true changepoints.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum MatchRule {
    /// The round the detector fired. The reported cut of a fresh change
    /// often lands a few rounds before it.
    #[default]
    Alarm,
    /// The reported cut round.
    Cut,
}

pub fn detection_report<N: NoiseModel>(trace: &Trace, env: &Environment<N>) -> DetectionReport {
    detection_report_with(trace, env, MatchRule::default())
}

/// Matches each alarm to the latest true changepoint at or before its
/// matching round; an alarm whose changepoint is absent or already claimed
/// is false.
pub fn detection_report_with<N: NoiseModel>(trace: &Trace, env: &Environment<N>, rule: MatchRule) -> DetectionReport {
    let shared = env.kind() == ModelKind::Joint;
    let schedules = env.schedules();
    let mut changes: Vec<Vec<ChangeOutcome>> = schedules
        .iter()
        .enumerate()
        .map(|(i, s)| {
            s.interior_changepoints()
                .iter()
                .map(|&c| ChangeOutcome {
                    arm: (!shared).then_some(i),
                    changepoint: c,
                    detected: false,
                    delay: None,
                })
                .collect()
        })
        .collect();
    let mut report = DetectionReport {
        false_alarms_by_arm: alloc::vec![0; schedules.len()],
        ..Default::default()
    };
    for alarm in &trace.alarms {
        let s = if shared { 0 } else { alarm.arm.unwrap_or(0) };
        let at = match rule {
            MatchRule::Alarm => alarm.result.alarm,
            MatchRule::Cut => alarm.result.cut,
        };
        let slot = changes[s].partition_point(|c| c.changepoint <= at).checked_sub(1);
        match slot.map(|j| &mut changes[s][j]) {
            Some(change) if !change.detected => {
                change.detected = true;
                change.delay = Some(alarm.result.alarm.saturating_sub(change.changepoint));
                report.matched_alarms += 1;
            }
            _ => {
                report.false_alarms += 1;
                report.false_alarms_by_arm[s] += 1;
            }
        }
    }
    report.changes = changes.into_iter().flatten().collect();
    report
}

/// Pointwise mean and standard error of several cumulative-regret curves.
#[derive(Debug, Clone, PartialEq)]
pub struct Curve {
    pub algo: String,
    pub reps: usize,
    pub mean: Vec<f64>,
    pub stderr: Vec<f64>,
}

impl Curve {
    pub fn final_mean(&self) -> f64 {
        self.mean.last().copied().unwrap_or(0.0)
    }

    pub fn final_stderr(&self) -> f64 {
        self.stderr.last().copied().unwrap_or(0.0)
    }
}

/// Aggregates equally long curves, reduced in the order given.
pub fn aggregate(algo: &str, curves: &[Vec<f64>]) -> Result<Curve> {
    let first = curves
        .first()
        .ok_or_else(|| crate::error::invalid("reps", "need at least one curve"))?;
    let len = first.len();
    if let Some(bad) = curves.iter().find(|c| c.len() != len) {
        return Err(Error::DimensionMismatch {
            expected: len,
            got: bad.len(),
        });
    }
    let n = curves.len() as f64;
    let mut mean = alloc::vec![0.0; len];
    for c in curves {
        mean.iter_mut().zip(c).for_each(|(m, v)| *m += v);
    }
    mean.iter_mut().for_each(|m| *m /= n);
    let stderr = if curves.len() < 2 {
        alloc::vec![0.0; len]
    } else {
        (0..len)
            .map(|t| {
                let ss: f64 = curves.iter().map(|c| (c[t] - mean[t]) * (c[t] - mean[t])).sum();
                libm::sqrt(ss / (n - 1.0) / n)
            })
            .collect()
    };
    Ok(Curve {
        algo: String::from(algo),
        reps: curves.len(),
        mean,
        stderr,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{flipping_env, scenario, ContextDist, Contexts, GaussianNoise, Scenario, SegmentSchedule};
    use crate::policy::{build_policy, Algo, Choice, PolicyParams, Problem};
    use alloc::vec;
    use rand::{Rng, SeedableRng};

    /// Pulls the arm with the largest first context coordinate times a fixed sign.
    struct ContextOnly;

    impl Policy for ContextOnly {
        fn name(&self) -> &'static str {
            "context-only"
        }
        fn select(&mut self, _t: usize, c: &Contexts, _rng: &mut dyn RngCore) -> Choice {
            let arm = (0..c.arms())
                .max_by(|&a, &b| c.arm(a)[0].total_cmp(&c.arm(b)[0]))
                .unwrap();
            Choice { arm, forced: false }
        }
        fn update(&mut self, _t: usize, _c: Choice, _x: &[f64], _y: f64) -> Option<Alarm> {
            None
        }
    }

    struct Uniform;

    impl Policy for Uniform {
        fn name(&self) -> &'static str {
            "uniform"
        }
        fn select(&mut self, _t: usize, c: &Contexts, rng: &mut dyn RngCore) -> Choice {
            Choice {
                arm: rng.random_range(0..c.arms()),
                forced: false,
            }
        }
        fn update(&mut self, _t: usize, _c: Choice, _x: &[f64], _y: f64) -> Option<Alarm> {
            None
        }
    }

    /// Pulls the best arm of a known environment.
    struct Oracle<'a>(&'a Environment);

    impl Policy for Oracle<'_> {
        fn name(&self) -> &'static str {
            "oracle"
        }
        fn select(&mut self, t: usize, c: &Contexts, _rng: &mut dyn RngCore) -> Choice {
            Choice {
                arm: self.0.oracle(t, c).unwrap().best_arm,
                forced: false,
            }
        }
        fn update(&mut self, _t: usize, _c: Choice, _x: &[f64], _y: f64) -> Option<Alarm> {
            None
        }
    }

    #[test]
    fn oracle_has_no_regret() {
        let env = scenario(Scenario::S1, 2000, 0).unwrap();
        let trace = run(&env, &mut Oracle(&env), 3).unwrap();
        assert_eq!(trace.horizon(), 2000);
        assert_eq!(trace.final_regret(), 0.0);
    }

    #[test]
    fn reruns_are_identical() {
        let env = scenario(Scenario::S1, 3000, 0).unwrap();
        let problem = Problem {
            kind: env.kind(),
            arms: 2,
            dim: 2,
            horizon: 3000,
            segments: 4,
        };
        let traces: Vec<Trace> = (0..2)
            .map(|_| {
                let mut p = build_policy(Algo::MultiscaleLinUcb, &problem, &PolicyParams::default(), 7).unwrap();
                run(&env, p.as_mut(), 7).unwrap()
            })
            .collect();
        assert_eq!(traces[0], traces[1]);
        assert!(!traces[0].alarms.is_empty());
    }

    #[test]
    fn regret_ignores_reward_noise() {
        let quiet = scenario_sigma(0.0);
        let loud = scenario_sigma(3.0);
        let a = run(&quiet, &mut ContextOnly, 5).unwrap();
        let b = run(&loud, &mut ContextOnly, 5).unwrap();
        assert_ne!(a.records[0].reward, b.records[0].reward);
        assert_eq!(a.cumulative_regret(), b.cumulative_regret());
        let curve = a.cumulative_regret();
        assert!(curve.windows(2).all(|w| w[1] >= w[0]) && curve[0] >= 0.0);
    }

    fn scenario_sigma(sigma: f64) -> Environment {
        let opts = crate::env::EnvOptions {
            noise_sigma: sigma,
            ..Default::default()
        };
        crate::env::scenario_with(Scenario::S3, 1000, 4, &opts).unwrap()
    }

    #[test]
    fn uniform_play_pays_the_average_gap() {
        let horizon = 30_000;
        let env = flipping_env(0.06, horizon).unwrap();
        let mut expected = 0.0;
        for t in 1..=horizon {
            let means: Vec<f64> = (0..2).map(|a| env.mean(t, a, &[1.0])).collect();
            let best = means.iter().cloned().fold(f64::MIN, f64::max);
            expected += means.iter().map(|m| best - m).sum::<f64>() / 2.0;
        }
        let got = run(&env, &mut Uniform, 1).unwrap().final_regret();
        assert!((got - expected).abs() <= 0.05 * expected, "{got} vs {expected}");
    }

    fn alarm(arm: Option<usize>, cut: usize, at: usize) -> AlarmEvent {
        AlarmEvent {
            arm,
            result: DetectionResult {
                cut,
                alarm: at,
                z_squared: 1.0,
                threshold: 0.0,
            },
        }
    }

    fn trace_with(alarms: Vec<AlarmEvent>) -> Trace {
        Trace {
            algo: "synthetic".into(),
            seed: 0,
            records: Vec::new(),
            alarms,
        }
    }

    fn mab_env(schedules: Vec<SegmentSchedule>) -> Environment {
        let arms = schedules.len();
        Environment::new(
            ModelKind::Mab,
            arms,
            schedules,
            ContextDist::Constant(1.0),
            GaussianNoise { sigma: 1.0 },
        )
        .unwrap()
    }

    #[test]
    fn perfect_and_missing_detections() {
        let env = scenario(Scenario::S1, 10_000, 0).unwrap();
        let perfect = trace_with([2000, 4000, 6000].iter().map(|&c| alarm(None, c, c)).collect());
        let r = detection_report(&perfect, &env);
        assert_eq!(r.false_alarms, 0);
        assert_eq!(r.delays().collect::<Vec<_>>(), [0, 0, 0]);
        let none = detection_report(&trace_with(Vec::new()), &env);
        assert_eq!(none.detected(), 0);
        assert_eq!(none.changes.len(), 3);
    }

    #[test]
    fn early_cut_matching_rules() {
        let env = scenario(Scenario::S1, 10_000, 0).unwrap();
        let t = trace_with(vec![alarm(None, 1995, 2004)]);
        let by_alarm = detection_report(&t, &env);
        assert_eq!((by_alarm.matched_alarms, by_alarm.changes[0].delay), (1, Some(4)));
        let by_cut = detection_report_with(&t, &env, MatchRule::Cut);
        assert_eq!((by_cut.false_alarms, by_cut.detected()), (1, 0));
    }

    fn brute_force(trace: &Trace, env: &Environment, rule: MatchRule) -> (Vec<(usize, usize, Option<usize>)>, usize) {
        let mut claimed: Vec<(usize, usize, Option<usize>)> = Vec::new();
        let mut false_alarms = 0;
        for a in &trace.alarms {
            let arm = a.arm.unwrap();
            let at = if rule == MatchRule::Alarm {
                a.result.alarm
            } else {
                a.result.cut
            };
            let mut latest = None;
            for &c in env.schedules()[arm].interior_changepoints() {
                if c <= at && latest.is_none_or(|l| c > l) {
                    latest = Some(c);
                }
            }
            match latest {
                Some(c) if !claimed.iter().any(|&(x, y, _)| x == arm && y == c) => {
                    claimed.push((arm, c, Some(a.result.alarm - c)));
                }
                _ => false_alarms += 1,
            }
        }
        (claimed, false_alarms)
    }

    #[test]
    fn report_matches_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..50 {
            let horizon = rng.random_range(50..400);
            let arms = rng.random_range(2..4);
            let schedules: Vec<SegmentSchedule> = (0..arms)
                .map(|_| {
                    let mut cps = vec![1];
                    for t in 2..=horizon {
                        if rng.random::<f64>() < 0.02 {
                            cps.push(t);
                        }
                    }
                    cps.push(horizon + 1);
                    let params = (1..cps.len()).map(|_| vec![rng.random::<f64>()]).collect();
                    SegmentSchedule::new(cps, params).unwrap()
                })
                .collect();
            let env = mab_env(schedules);
            let mut alarms: Vec<AlarmEvent> = (0..rng.random_range(0..12))
                .map(|_| {
                    let at = rng.random_range(1..=horizon);
                    alarm(Some(rng.random_range(0..arms)), rng.random_range(1..=at), at)
                })
                .collect();
            alarms.sort_by_key(|a| a.result.alarm);
            let trace = trace_with(alarms);
            for rule in [MatchRule::Alarm, MatchRule::Cut] {
                let report = detection_report_with(&trace, &env, rule);
                let (claimed, false_alarms) = brute_force(&trace, &env, rule);
                assert_eq!(report.false_alarms, false_alarms);
                assert_eq!(report.total_alarms(), trace.alarms.len());
                let mut got: Vec<_> = report
                    .changes
                    .iter()
                    .filter(|c| c.detected)
                    .map(|c| (c.arm.unwrap(), c.changepoint, c.delay))
                    .collect();
                let mut want = claimed;
                got.sort();
                want.sort();
                assert_eq!(got, want);
                assert_eq!(report.false_alarms_by_arm.iter().sum::<usize>(), false_alarms);
            }
        }
    }

    #[test]
    fn aggregate_is_the_pointwise_mean() {
        let single = aggregate("x", &[vec![1.0, 2.0, 4.0]]).unwrap();
        assert_eq!(single.mean, [1.0, 2.0, 4.0]);
        assert_eq!(single.stderr, [0.0; 3]);
        let curves = vec![vec![0.0, 1.0], vec![2.0, 3.0], vec![4.0, 8.0]];
        let c = aggregate("x", &curves).unwrap();
        assert_eq!(c.mean, [2.0, 4.0]);
        assert!((c.stderr[0] - libm::sqrt(4.0 / 3.0)).abs() < 1e-12);
        assert!(aggregate("x", &[vec![1.0], vec![1.0, 2.0]]).is_err());
        assert!(aggregate("x", &[]).is_err());
    }

    #[test]
    fn streams_are_distinct() {
        let a = stream_rng(1, Stream::Contexts).next_u64();
        let b = stream_rng(1, Stream::Noise).next_u64();
        assert_ne!(a, b);
    }
}
