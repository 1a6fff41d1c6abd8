//! Command implementations behind the CLI.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use msbandit_core::harness::Curve;

use crate::config::{resolve_sweep_key, ExperimentConfig, TraceOutput, Violation};
use crate::experiment::{replicate, Outcome};
use crate::io;
use crate::plot::render_svg;

#[derive(Debug, Clone, Default)]
pub struct RunOverrides {
    pub seed: Option<u64>,
    pub reps: Option<usize>,
    pub jobs: Option<usize>,
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Default)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
    pub warnings: Vec<String>,
}

pub fn cmd_validate(path: &Path) -> anyhow::Result<ValidationReport> {
    let cfg = ExperimentConfig::load(path)?;
    Ok(ValidationReport {
        violations: cfg.violations(),
        warnings: cfg.warnings(),
    })
}

/// Files written by one run.
#[derive(Debug, Clone)]
pub struct RunFiles {
    pub curves: PathBuf,
    pub report: PathBuf,
    pub alarms: PathBuf,
    pub schedule: PathBuf,
    pub plot: PathBuf,
    pub traces: Vec<PathBuf>,
}

pub fn apply_overrides(cfg: &mut ExperimentConfig, o: &RunOverrides) {
    if let Some(s) = o.seed {
        cfg.seed = s;
    }
    if let Some(r) = o.reps {
        cfg.reps = r;
    }
    if let Some(out) = &o.out {
        cfg.out = Some(out.clone());
    }
}

/// Replicates and writes every output under the config's output directory.
pub fn run_config(cfg: &ExperimentConfig, jobs: usize) -> anyhow::Result<(Outcome, RunFiles)> {
    let outcome = replicate(cfg, jobs)?;
    let dir = cfg.out_dir();
    std::fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    let d = &outcome.digest;
    let files = RunFiles {
        curves: dir.join("curves.csv"),
        report: dir.join("report.csv"),
        alarms: dir.join("alarms.csv"),
        schedule: dir.join("schedule.csv"),
        plot: dir.join("regret.svg"),
        traces: Vec::new(),
    };
    io::write_curves(&files.curves, &outcome.curves, d)?;
    io::write_report(&files.report, &outcome.runs, d)?;
    io::write_alarms(&files.alarms, &outcome.runs, d)?;
    io::write_schedules(&files.schedule, &outcome.envs, d)?;
    let title = format!("{} (T = {}, {} reps)", scenario_name(cfg), cfg.horizon, cfg.reps);
    std::fs::write(
        &files.plot,
        render_svg(&outcome.curves, &title, &format!("digest: {d}")),
    )
    .with_context(|| format!("writing {}", files.plot.display()))?;
    let mut files = files;
    for r in &outcome.runs {
        let keep = match cfg.traces {
            TraceOutput::None => false,
            TraceOutput::First => r.seed == cfg.seed,
            TraceOutput::All => true,
        };
        if keep {
            let path = dir.join("traces").join(format!("{}-seed{}.csv", r.algo.name(), r.seed));
            io::write_trace(&path, &r.trace, d)?;
            files.traces.push(path);
        }
    }
    Ok((outcome, files))
}

fn scenario_name(cfg: &ExperimentConfig) -> String {
    format!("{:?}", cfg.scenario).to_lowercase()
}

pub fn cmd_run(path: &Path, o: &RunOverrides) -> anyhow::Result<(Outcome, RunFiles)> {
    let mut cfg = ExperimentConfig::load(path)?;
    apply_overrides(&mut cfg, o);
    run_config(&cfg, o.jobs.unwrap_or(1))
}

/// Fixed-width summary of final regret and detection counts.
pub fn summary_table(outcome: &Outcome) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "digest {}", outcome.digest);
    let _ = writeln!(
        s,
        "{:<20} {:>14} {:>12} {:>11} {:>12} {:>12}",
        "algo", "final_regret", "stderr", "alarms/rep", "detected", "false_alarms"
    );
    for c in &outcome.curves {
        let runs: Vec<_> = outcome.runs.iter().filter(|r| r.algo.name() == c.algo).collect();
        let n = runs.len().max(1) as f64;
        let alarms: usize = runs.iter().map(|r| r.trace.alarms.len()).sum();
        let detected: usize = runs.iter().map(|r| r.report.detected()).sum();
        let changes: usize = runs.iter().map(|r| r.report.changes.len()).sum();
        let false_alarms: usize = runs.iter().map(|r| r.report.false_alarms).sum();
        let _ = writeln!(
            s,
            "{:<20} {:>14.3} {:>12.3} {:>11.2} {:>12} {:>12}",
            c.algo,
            c.final_mean(),
            c.final_stderr(),
            alarms as f64 / n,
            format!("{detected}/{changes}"),
            false_alarms
        );
    }
    s
}

/// One run per value, written to `<out>/<key>=<value>/`.
pub fn cmd_sweep(
    path: &Path,
    key: &str,
    values: &[String],
    o: &RunOverrides,
) -> anyhow::Result<Vec<(String, Outcome, RunFiles)>> {
    let mut base = ExperimentConfig::load(path)?;
    apply_overrides(&mut base, o);
    let (full, _) = resolve_sweep_key(key)?;
    let mut out = Vec::new();
    for v in values {
        let mut cfg = base.with_value(full, v)?;
        cfg.out = Some(base.out_dir().join(format!("{full}={}", v.trim())));
        let (outcome, files) = run_config(&cfg, o.jobs.unwrap_or(1))?;
        out.push((v.trim().to_owned(), outcome, files));
    }
    Ok(out)
}

/// Plots every curve of the given files into one SVG.
pub fn cmd_plot(curve_files: &[PathBuf], out: &Path) -> anyhow::Result<usize> {
    if curve_files.is_empty() {
        bail!("no curve files given");
    }
    let mut curves: Vec<Curve> = Vec::new();
    let mut digests = Vec::new();
    let mut horizon: Option<(usize, &Path)> = None;
    for f in curve_files {
        let (cs, digest) = io::read_curves(f)?;
        for c in &cs {
            match horizon {
                None => horizon = Some((c.mean.len(), f)),
                Some((h, first)) if h != c.mean.len() => bail!(
                    "horizon mismatch: {} has T = {h} but {} has T = {}",
                    first.display(),
                    f.display(),
                    c.mean.len()
                ),
                _ => {}
            }
        }
        digests.push(digest.unwrap_or_else(|| "unknown".into()));
        curves.extend(cs);
    }
    let note = format!("source digests: {}", digests.join(", "));
    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    std::fs::write(out, render_svg(&curves, "mean cumulative regret", &note))
        .with_context(|| format!("writing {}", out.display()))?;
    Ok(curves.len())
}
