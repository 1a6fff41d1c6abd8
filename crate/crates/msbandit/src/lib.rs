//! Experiment runner for multiscale changepoint bandits: TOML configs,
//! parallel replication, CSV and SVG outputs.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod commands;
pub mod config;
pub mod experiment;
pub mod io;
pub mod plot;

pub use config::ExperimentConfig;
pub use experiment::{replicate, Outcome, RunResult};
