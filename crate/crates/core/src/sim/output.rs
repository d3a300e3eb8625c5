//! Trace and summary files.
//!
//! CSV columns, in order:
//! `k, agent, x0..x{d-1}, measurement, g0..g{d-1}, grad0..grad{d-1},
//! gradient_error, error_bound, phi, tracking_error, stacked_tracking_error, bound`.
//! Row `k` describes the state before update `k`; inapplicable columns hold `NaN`.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::dynamics::{MethodKind, SimTrace, TraceConstants};
use crate::error::Result;
use crate::sim::config::{OutputFormat, RawConfig};

pub fn csv_header(dim: usize) -> Vec<String> {
    let mut h = vec!["k".to_string(), "agent".to_string()];
    h.extend((0..dim).map(|i| format!("x{i}")));
    h.push("measurement".into());
    h.extend((0..dim).map(|i| format!("g{i}")));
    h.extend((0..dim).map(|i| format!("grad{i}")));
    h.extend(
        [
            "gradient_error",
            "error_bound",
            "phi",
            "tracking_error",
            "stacked_tracking_error",
            "bound",
        ]
        .iter()
        .map(|s| s.to_string()),
    );
    h
}

pub fn write_csv<W: Write>(trace: &SimTrace, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(csv_header(trace.dim))?;
    let mut rec: Vec<String> = Vec::new();
    for r in &trace.rows {
        rec.clear();
        rec.push(r.k.to_string());
        rec.push(r.agent.to_string());
        rec.extend(r.position.iter().map(f64::to_string));
        rec.push(r.measurement.to_string());
        rec.extend(r.estimate.iter().map(f64::to_string));
        rec.extend(r.true_gradient.iter().map(f64::to_string));
        for v in [
            r.gradient_error,
            r.error_bound,
            r.phi,
            r.tracking_error,
            r.stacked_tracking_error,
            r.bound,
        ] {
            rec.push(v.to_string());
        }
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_json<W: Write>(trace: &SimTrace, out: W) -> Result<()> {
    serde_json::to_writer(out, &trace.rows)?;
    Ok(())
}

/// Means over the last fifth of the iterations, averaged across agents.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize)]
pub struct SteadyState {
    pub from_iteration: usize,
    pub mean_tracking_error: f64,
    pub mean_stacked_tracking_error: f64,
    pub mean_gradient_error: f64,
    pub mean_error_bound: f64,
}

pub fn steady_state_start(steps: usize) -> usize {
    steps - steps / 5
}

pub fn steady_state(trace: &SimTrace) -> Option<SteadyState> {
    if trace.steps == 0 {
        return None;
    }
    let from = steady_state_start(trace.steps).min(trace.steps - 1);
    let rows = &trace.rows[from * trace.agents..];
    let mean = |f: &dyn Fn(&crate::dynamics::TraceRow) -> f64| rows.iter().map(f).sum::<f64>() / rows.len() as f64;
    Some(SteadyState {
        from_iteration: from,
        mean_tracking_error: mean(&|r| r.tracking_error),
        mean_stacked_tracking_error: mean(&|r| r.stacked_tracking_error),
        mean_gradient_error: mean(&|r| r.gradient_error),
        mean_error_bound: mean(&|r| r.error_bound),
    })
}

/// Agent-averaged value of a column per iteration.
pub fn per_iteration_mean(trace: &SimTrace, column: impl Fn(&crate::dynamics::TraceRow) -> f64) -> Vec<f64> {
    trace
        .rows
        .chunks(trace.agents)
        .map(|c| c.iter().map(&column).sum::<f64>() / c.len() as f64)
        .collect()
}

#[derive(Clone, Debug, Serialize)]
pub struct RunSummary {
    pub name: String,
    pub method: MethodKind,
    pub steps: usize,
    pub seed: u64,
    pub agents: usize,
    pub dim: usize,
    pub final_tracking_error: f64,
    pub max_bound_violation: Option<f64>,
    pub steady_state: Option<SteadyState>,
    pub constants: TraceConstants,
    pub wall_time_seconds: f64,
    pub config: RawConfig,
}

impl RunSummary {
    pub fn new(
        name: &str,
        seed: u64,
        trace: &SimTrace,
        field: &crate::field::QuadraticField,
        wall: f64,
        config: &RawConfig,
    ) -> Self {
        let xs = field.minimizer(trace.steps);
        let final_tracking_error = trace
            .final_state
            .positions
            .iter()
            .map(|x| 0.5 * (x - &xs).norm_squared())
            .sum::<f64>()
            / trace.agents as f64;
        Self {
            name: name.to_string(),
            method: trace.method,
            steps: trace.steps,
            seed,
            agents: trace.agents,
            dim: trace.dim,
            final_tracking_error,
            max_bound_violation: trace.max_bound_violation(),
            steady_state: steady_state(trace),
            constants: trace.constants,
            wall_time_seconds: wall,
            config: config.clone(),
        }
    }
}

/// Writes `trace.csv` or `trace.json`, plus `summary.json`, into `dir`.
pub fn emit(trace: &SimTrace, summary: &RunSummary, dir: &Path, format: OutputFormat) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let trace_path = match format {
        OutputFormat::Csv => {
            let p = dir.join("trace.csv");
            write_csv(trace, std::io::BufWriter::new(fs::File::create(&p)?))?;
            p
        }
        OutputFormat::Json => {
            let p = dir.join("trace.json");
            write_json(trace, std::io::BufWriter::new(fs::File::create(&p)?))?;
            p
        }
    };
    let summary_path = dir.join("summary.json");
    fs::write(&summary_path, serde_json::to_string_pretty(summary)?)?;
    Ok(vec![trace_path, summary_path])
}
