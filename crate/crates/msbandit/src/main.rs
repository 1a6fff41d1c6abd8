use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use msbandit::commands::{cmd_plot, cmd_run, cmd_sweep, cmd_validate, summary_table, RunOverrides};

#[derive(Parser)]
#[command(name = "msbandit", version, about = "Multiscale changepoint bandit experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment and write curves, reports and traces.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        reps: Option<usize>,
        #[arg(long, default_value_t = 1)]
        jobs: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run once per value of a numeric config key.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        key: String,
        #[arg(long, value_delimiter = ',', num_args = 0..)]
        values: Vec<String>,
        #[arg(long, default_value_t = 1)]
        jobs: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Plot curve CSVs into one SVG.
    Plot {
        #[arg(long, value_delimiter = ',', required = true)]
        curves: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Check a config and list every violation.
    Validate {
        #[arg(long)]
        config: PathBuf,
    },
}

fn main() -> ExitCode {
    match dispatch(Cli::parse().command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn dispatch(command: Command) -> anyhow::Result<ExitCode> {
    match command {
        Command::Run {
            config,
            seed,
            reps,
            jobs,
            out,
        } => {
            let o = RunOverrides {
                seed,
                reps,
                jobs: Some(jobs),
                out,
            };
            let (outcome, files) = cmd_run(&config, &o)?;
            print!("{}", summary_table(&outcome));
            println!("wrote {} and {}", files.curves.display(), files.report.display());
        }
        Command::Sweep {
            config,
            key,
            values,
            jobs,
            out,
        } => {
            let values: Vec<String> = values.into_iter().filter(|v| !v.trim().is_empty()).collect();
            if values.is_empty() {
                eprintln!("warning: empty value list, nothing to run");
                return Ok(ExitCode::SUCCESS);
            }
            let o = RunOverrides {
                jobs: Some(jobs),
                out,
                ..Default::default()
            };
            for (value, outcome, files) in cmd_sweep(&config, &key, &values, &o)? {
                println!("== {key} = {value}");
                print!("{}", summary_table(&outcome));
                println!("wrote {}", files.curves.display());
            }
        }
        Command::Plot { curves, out } => {
            let n = cmd_plot(&curves, &out)?;
            println!("wrote {} ({n} series)", out.display());
        }
        Command::Validate { config } => {
            let report = cmd_validate(&config)?;
            for w in &report.warnings {
                eprintln!("warning: {w}");
            }
            if report.violations.is_empty() {
                println!("ok");
            } else {
                for v in &report.violations {
                    println!("{v}");
                }
                return Ok(ExitCode::FAILURE);
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}
