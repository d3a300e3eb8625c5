//! Scenario files, runs, trace output, verification and comparisons.

pub mod checks;
pub mod compare;
pub mod config;
pub mod output;

use std::path::PathBuf;
use std::time::Instant;

use crate::dynamics::{run, SimTrace};
use crate::error::Result;
use config::ScenarioConfig;
use output::{emit, RunSummary};

/// Runs a validated scenario, returning the trace and the wall time in seconds.
pub fn run_config(cfg: &ScenarioConfig) -> Result<(SimTrace, f64)> {
    let start = Instant::now();
    let trace = run(&cfg.scenario, cfg.steps)?;
    Ok((trace, start.elapsed().as_secs_f64()))
}

/// Runs `cfg` and writes the trace and summary to its output directory.
pub fn run_scenario(cfg: &ScenarioConfig) -> Result<(SimTrace, RunSummary, Vec<PathBuf>)> {
    let (trace, wall) = run_config(cfg)?;
    let summary = RunSummary::new(&cfg.name, cfg.seed, &trace, &cfg.scenario.field, wall, &cfg.raw);
    let files = emit(&trace, &summary, &cfg.out_dir, cfg.format)?;
    Ok((trace, summary, files))
}
