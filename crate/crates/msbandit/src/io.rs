//! CSV export and import. Floats carry 12 significant digits; every file
//! starts with a `# digest: <sha256>` comment naming the producing config.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use anyhow::{bail, Context};
use msbandit_core::env::Environment;
use msbandit_core::harness::{Curve, RoundRecord, Trace};

use crate::experiment::RunResult;

/// `x` rounded to 12 significant digits, printed in shortest form.
pub fn fmt_float(x: f64) -> String {
    if !x.is_finite() {
        return format!("{x}");
    }
    let rounded: f64 = format!("{x:.11e}").parse().expect("formatted float parses");
    if rounded == 0.0 {
        "0".to_owned()
    } else {
        format!("{rounded}")
    }
}

fn create(path: &Path, digest: &str) -> anyhow::Result<csv::Writer<BufWriter<File>>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    let file = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    let mut w = BufWriter::new(file);
    writeln!(w, "# digest: {digest}").with_context(|| format!("writing {}", path.display()))?;
    Ok(csv::Writer::from_writer(w))
}

fn finish(mut w: csv::Writer<BufWriter<File>>, path: &Path) -> anyhow::Result<()> {
    w.flush().with_context(|| format!("writing {}", path.display()))
}

fn open(path: &Path) -> anyhow::Result<(Option<String>, csv::Reader<BufReader<File>>)> {
    let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    let mut r = BufReader::new(file);
    let mut first = String::new();
    r.read_line(&mut first)
        .with_context(|| format!("reading {}", path.display()))?;
    let digest = first.strip_prefix("# digest: ").map(|d| d.trim().to_owned());
    let file = File::open(path)?;
    let reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_reader(BufReader::new(file));
    Ok((digest, reader))
}

fn field<T: std::str::FromStr>(rec: &csv::StringRecord, i: usize, path: &Path) -> anyhow::Result<T> {
    let raw = rec.get(i).unwrap_or("");
    raw.parse().map_err(|_| {
        let line = rec.position().map_or(0, |p| p.line());
        anyhow::anyhow!("{}:{line}: bad value `{raw}` in column {}", path.display(), i + 1)
    })
}

pub fn write_curves(path: &Path, curves: &[Curve], digest: &str) -> anyhow::Result<()> {
    let mut w = create(path, digest)?;
    w.write_record(["algo", "t", "mean_cum_regret", "stderr"])?;
    for c in curves {
        for (i, (m, s)) in c.mean.iter().zip(&c.stderr).enumerate() {
            w.write_record([c.algo.as_str(), &(i + 1).to_string(), &fmt_float(*m), &fmt_float(*s)])?;
        }
    }
    finish(w, path)
}

/// Curves in file order, with the file's digest.
pub fn read_curves(path: &Path) -> anyhow::Result<(Vec<Curve>, Option<String>)> {
    let (digest, mut r) = open(path)?;
    let mut curves: Vec<Curve> = Vec::new();
    for rec in r.records() {
        let rec = rec.with_context(|| format!("reading {}", path.display()))?;
        let algo = rec.get(0).unwrap_or("").to_owned();
        let t: usize = field(&rec, 1, path)?;
        if curves.last().is_none_or(|c| c.algo != algo) {
            curves.push(Curve {
                algo: algo.clone(),
                reps: 0,
                mean: Vec::new(),
                stderr: Vec::new(),
            });
        }
        let c = curves.last_mut().unwrap();
        if t != c.mean.len() + 1 {
            bail!("{}: rounds of `{algo}` are not consecutive at t={t}", path.display());
        }
        c.mean.push(field(&rec, 2, path)?);
        c.stderr.push(field(&rec, 3, path)?);
    }
    Ok((curves, digest))
}

pub fn write_trace(path: &Path, trace: &Trace, digest: &str) -> anyhow::Result<()> {
    let mut w = create(path, digest)?;
    w.write_record(["t", "arm", "reward", "oracle_mean", "chosen_mean", "forced", "alarm"])?;
    for r in &trace.records {
        w.write_record([
            r.t.to_string(),
            r.arm.to_string(),
            fmt_float(r.reward),
            fmt_float(r.oracle_mean),
            fmt_float(r.chosen_mean),
            (r.forced as u8).to_string(),
            (r.alarm as u8).to_string(),
        ])?;
    }
    finish(w, path)
}

pub fn read_trace(path: &Path) -> anyhow::Result<(Vec<RoundRecord>, Option<String>)> {
    let (digest, mut r) = open(path)?;
    let mut out = Vec::new();
    for rec in r.records() {
        let rec = rec.with_context(|| format!("reading {}", path.display()))?;
        out.push(RoundRecord {
            t: field(&rec, 0, path)?,
            arm: field(&rec, 1, path)?,
            reward: field(&rec, 2, path)?,
            oracle_mean: field(&rec, 3, path)?,
            chosen_mean: field(&rec, 4, path)?,
            forced: field::<u8>(&rec, 5, path)? == 1,
            alarm: field::<u8>(&rec, 6, path)? == 1,
        });
    }
    Ok((out, digest))
}

fn arm_label(arm: Option<usize>) -> String {
    arm.map_or_else(|| "all".to_owned(), |a| a.to_string())
}

/// Per changepoint outcome of every run, each run closed by a
/// `false_alarms` row holding the count in the `changepoint` column.
pub fn write_report(path: &Path, runs: &[RunResult], digest: &str) -> anyhow::Result<()> {
    let mut w = create(path, digest)?;
    w.write_record(["algo", "seed", "arm", "changepoint", "detected", "delay_rounds"])?;
    for run in runs {
        let (algo, seed) = (run.algo.name(), run.seed.to_string());
        for c in &run.report.changes {
            w.write_record([
                algo,
                &seed,
                &arm_label(c.arm),
                &c.changepoint.to_string(),
                if c.detected { "1" } else { "0" },
                &c.delay.map(|d| d.to_string()).unwrap_or_default(),
            ])?;
        }
        w.write_record([
            algo,
            &seed,
            "false_alarms",
            &run.report.false_alarms.to_string(),
            "",
            "",
        ])?;
    }
    finish(w, path)
}

pub fn write_alarms(path: &Path, runs: &[RunResult], digest: &str) -> anyhow::Result<()> {
    let mut w = create(path, digest)?;
    w.write_record([
        "algo",
        "seed",
        "arm",
        "alarm_round",
        "cut_round",
        "z_squared",
        "threshold",
    ])?;
    for run in runs {
        for a in &run.trace.alarms {
            w.write_record([
                run.algo.name().to_owned(),
                run.seed.to_string(),
                arm_label(a.arm),
                a.result.alarm.to_string(),
                a.result.cut.to_string(),
                fmt_float(a.result.z_squared),
                fmt_float(a.result.threshold),
            ])?;
        }
    }
    finish(w, path)
}

/// True segments of every replicate's environment.
pub fn write_schedules(path: &Path, envs: &[(u64, Environment)], digest: &str) -> anyhow::Result<()> {
    let mut w = create(path, digest)?;
    let dim = envs.first().map_or(1, |(_, e)| e.dim());
    let mut header = vec![
        "seed".to_owned(),
        "arm".into(),
        "segment".into(),
        "start".into(),
        "end".into(),
    ];
    header.extend((1..=dim).map(|i| format!("theta_{i}")));
    w.write_record(&header)?;
    for (seed, env) in envs {
        let shared = env.schedules().len() == 1 && env.arms() > 1;
        for (arm, s) in env.schedules().iter().enumerate() {
            let cps = s.changepoints();
            for (j, theta) in s.params().iter().enumerate() {
                let mut row = vec![
                    seed.to_string(),
                    if shared { "all".to_owned() } else { arm.to_string() },
                    (j + 1).to_string(),
                    cps[j].to_string(),
                    (cps[j + 1] - 1).to_string(),
                ];
                row.extend(theta.iter().map(|v| fmt_float(*v)));
                w.write_record(&row)?;
            }
        }
    }
    finish(w, path)
}
