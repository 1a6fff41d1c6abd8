use std::path::Path;

use msbandit::commands::{cmd_plot, cmd_sweep, run_config, RunOverrides};
use msbandit::config::{ExperimentConfig, TraceOutput};
use msbandit::io::{fmt_float, read_curves, read_trace, write_curves, write_trace};
use msbandit::replicate;
use msbandit_core::harness::{aggregate, Trace};

fn small(scenario: &str, algos: &str, horizon: usize, reps: usize) -> ExperimentConfig {
    ExperimentConfig::from_toml(&format!(
        "scenario = \"{scenario}\"\nalgos = [{algos}]\nhorizon = {horizon}\nreps = {reps}\nseed = 3\n"
    ))
    .unwrap()
}

fn bytes(p: &Path) -> Vec<u8> {
    std::fs::read(p).unwrap()
}

#[test]
fn twelve_significant_digits() {
    assert_eq!(fmt_float(1.0 / 3.0), "0.333333333333");
    assert_eq!(fmt_float(-0.0), "0");
    assert_eq!(fmt_float(123_456_789.123_456_78), "123456789.123");
    assert_eq!(fmt_float(2.5e-7), "0.00000025");
}

#[test]
fn trace_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small("s1", "\"multiscale-linucb\"", 800, 1);
    let out = replicate(&cfg, 1).unwrap();
    let trace = &out.runs[0].trace;
    let first = dir.path().join("a.csv");
    write_trace(&first, trace, "d").unwrap();
    let (records, digest) = read_trace(&first).unwrap();
    assert_eq!(digest.as_deref(), Some("d"));
    assert_eq!(records.len(), 800);
    for (a, b) in records.iter().zip(&trace.records) {
        assert_eq!((a.t, a.arm, a.forced, a.alarm), (b.t, b.arm, b.forced, b.alarm));
        assert!((a.reward - b.reward).abs() <= 1e-11 * b.reward.abs().max(1.0));
    }
    let again = Trace {
        records,
        ..trace.clone()
    };
    let second = dir.path().join("b.csv");
    write_trace(&second, &again, "d").unwrap();
    assert_eq!(bytes(&first), bytes(&second));
}

#[test]
fn curve_files_have_one_row_per_round() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small("s3", "\"linucb\", \"d-linucb\"", 300, 2);
    let out = replicate(&cfg, 1).unwrap();
    let p = dir.path().join("c.csv");
    write_curves(&p, &out.curves, &out.digest).unwrap();
    let (curves, digest) = read_curves(&p).unwrap();
    assert_eq!(digest.unwrap(), out.digest);
    assert_eq!(curves.len(), 2);
    assert!(curves.iter().all(|c| c.mean.len() == 300));
    let q = dir.path().join("d.csv");
    write_curves(&q, &out.curves, &out.digest).unwrap();
    assert_eq!(bytes(&p), bytes(&q));
}

#[test]
fn aggregate_is_the_mean_of_seed_curves() {
    let cfg = small("s4", "\"linucb\"", 400, 3);
    let out = replicate(&cfg, 2).unwrap();
    let per_seed: Vec<Vec<f64>> = out.runs.iter().map(|r| r.trace.cumulative_regret()).collect();
    for t in [0, 199, 399] {
        let direct = per_seed.iter().map(|c| c[t]).sum::<f64>() / 3.0;
        assert!((out.curves[0].mean[t] - direct).abs() < 1e-9);
    }
    let one = replicate(&small("s4", "\"linucb\"", 400, 1), 1).unwrap();
    assert_eq!(one.curves[0].mean, one.runs[0].trace.cumulative_regret());
    assert_eq!(
        aggregate("linucb", &[one.runs[0].trace.cumulative_regret()]).unwrap(),
        one.curves[0]
    );
}

#[test]
fn randomized_scenarios_redraw_per_seed() {
    let out = replicate(&small("s3", "\"linucb\"", 500, 2), 1).unwrap();
    assert_ne!(out.envs[0].1.schedules(), out.envs[1].1.schedules());
}

#[test]
fn identical_outputs_across_jobs() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small("flipping", "\"multiscale-ucb\", \"ucb\", \"sw-ucb\"", 3000, 4);
    cfg.traces = TraceOutput::All;
    let mut files = Vec::new();
    for (i, jobs) in [1, 3, 1].into_iter().enumerate() {
        cfg.out = Some(dir.path().join(format!("run{i}")));
        files.push(run_config(&cfg, jobs).unwrap().1);
    }
    for f in &files[1..] {
        assert_eq!(bytes(&files[0].curves), bytes(&f.curves));
        assert_eq!(bytes(&files[0].report), bytes(&f.report));
        assert_eq!(bytes(&files[0].alarms), bytes(&f.alarms));
        assert_eq!(files[0].traces.len(), 12);
        for (a, b) in files[0].traces.iter().zip(&f.traces) {
            assert_eq!(bytes(a), bytes(b));
        }
    }
}

#[test]
fn plots() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small("s1", "\"linucb\", \"sw-linucb\"", 500, 1);
    cfg.out = Some(dir.path().join("a"));
    let a = run_config(&cfg, 1).unwrap().1;
    cfg.horizon = 600;
    cfg.out = Some(dir.path().join("b"));
    let b = run_config(&cfg, 1).unwrap().1;

    let svg = dir.path().join("p.svg");
    assert_eq!(cmd_plot(std::slice::from_ref(&a.curves), &svg).unwrap(), 2);
    let text = std::fs::read_to_string(&svg).unwrap();
    assert_eq!(text.matches("<polyline").count(), 2);
    assert!(text.contains("sw-linucb") && text.contains("round t"));
    let again = dir.path().join("q.svg");
    cmd_plot(std::slice::from_ref(&a.curves), &again).unwrap();
    assert_eq!(bytes(&svg), bytes(&again));

    let err = cmd_plot(&[a.curves.clone(), b.curves.clone()], &svg)
        .unwrap_err()
        .to_string();
    assert!(err.contains("a/curves.csv") && err.contains("b/curves.csv"), "{err}");
}

#[test]
fn sweep_writes_one_set_per_value() {
    let dir = tempfile::tempdir().unwrap();
    let cfg_path = dir.path().join("flip.toml");
    std::fs::write(
        &cfg_path,
        format!(
            "scenario = \"flipping\"\nalgos = [\"multiscale-ucb\", \"ucb\"]\nhorizon = 900\nreps = 1\nout = \"{}\"\n",
            dir.path().join("out").display()
        ),
    )
    .unwrap();
    let runs = cmd_sweep(
        &cfg_path,
        "epsilon",
        &["0.01".into(), "0.06".into()],
        &RunOverrides::default(),
    )
    .unwrap();
    assert_eq!(runs.len(), 2);
    assert!(dir.path().join("out/env.epsilon=0.01/curves.csv").exists());
    assert!(dir.path().join("out/env.epsilon=0.06/report.csv").exists());
    assert_ne!(runs[0].1.digest, runs[1].1.digest);
}
