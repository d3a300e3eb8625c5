//! Side-by-side runs of several scenarios on the same field.

use std::fs;
use std::path::Path;

use serde::Serialize;

use crate::dynamics::{MethodKind, SimTrace};
use crate::error::{Error, Result};
use crate::sim::config::ScenarioConfig;
use crate::sim::output::{per_iteration_mean, steady_state, SteadyState};
use crate::sim::run_config;

#[derive(Clone, Debug, Serialize)]
pub struct ScenarioOutcome {
    pub name: String,
    pub method: MethodKind,
    pub completed: bool,
    pub diverged_at: Option<usize>,
    pub error: Option<String>,
    pub steady_state: Option<SteadyState>,
}

#[derive(Clone, Debug, Serialize)]
pub struct Comparison {
    pub scenarios: Vec<ScenarioOutcome>,
}

impl Comparison {
    pub fn get(&self, name: &str) -> Option<&ScenarioOutcome> {
        self.scenarios.iter().find(|s| s.name == name)
    }
}

/// Runs all configs in parallel. Divergence is recorded, not raised.
pub fn compare(configs: &[ScenarioConfig]) -> Result<(Comparison, Vec<Option<SimTrace>>)> {
    if let Some(first) = configs.first() {
        for c in &configs[1..] {
            if c.scenario.field != first.scenario.field {
                return Err(Error::MismatchedFields(format!(
                    "`{}` and `{}` use different fields",
                    first.name, c.name
                )));
            }
        }
    }
    let results: Vec<Result<SimTrace>> = std::thread::scope(|s| {
        let handles: Vec<_> = configs
            .iter()
            .map(|c| s.spawn(move || run_config(c).map(|r| r.0)))
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("scenario thread panicked"))
            .collect()
    });
    let mut outcomes = Vec::new();
    let mut traces = Vec::new();
    for (cfg, res) in configs.iter().zip(results) {
        let method = cfg.scenario.method.kind();
        match res {
            Ok(t) => {
                outcomes.push(ScenarioOutcome {
                    name: cfg.name.clone(),
                    method,
                    completed: true,
                    diverged_at: None,
                    error: None,
                    steady_state: steady_state(&t),
                });
                traces.push(Some(t));
            }
            Err(e) => {
                outcomes.push(ScenarioOutcome {
                    name: cfg.name.clone(),
                    method,
                    completed: false,
                    diverged_at: match e {
                        Error::Diverged { step } => Some(step),
                        _ => None,
                    },
                    error: Some(e.to_string()),
                    steady_state: None,
                });
                traces.push(None);
            }
        }
    }
    Ok((Comparison { scenarios: outcomes }, traces))
}

/// Merged per-iteration CSV: `k`, then for each scenario its agent-averaged
/// tracking error, gradient error and error bound. Missing values are blank.
pub fn write_merged_csv(comparison: &Comparison, traces: &[Option<SimTrace>], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["k".to_string()];
    for s in &comparison.scenarios {
        for col in ["tracking_error", "gradient_error", "error_bound"] {
            header.push(format!("{}_{col}", s.name));
        }
    }
    w.write_record(&header)?;
    let series: Vec<Option<[Vec<f64>; 3]>> = traces
        .iter()
        .map(|t| {
            t.as_ref().map(|t| {
                [
                    per_iteration_mean(t, |r| r.tracking_error),
                    per_iteration_mean(t, |r| r.gradient_error),
                    per_iteration_mean(t, |r| r.error_bound),
                ]
            })
        })
        .collect();
    let len = series.iter().flatten().map(|s| s[0].len()).max().unwrap_or(0);
    for k in 0..len {
        let mut rec = vec![k.to_string()];
        for s in &series {
            for col in 0..3 {
                rec.push(
                    s.as_ref()
                        .and_then(|s| s[col].get(k))
                        .map_or(String::new(), f64::to_string),
                );
            }
        }
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// Runs, then writes `comparison.csv` and `comparison.json` into `dir`.
pub fn compare_to_dir(configs: &[ScenarioConfig], dir: &Path) -> Result<Comparison> {
    let (cmp, traces) = compare(configs)?;
    fs::create_dir_all(dir)?;
    write_merged_csv(&cmp, &traces, &dir.join("comparison.csv"))?;
    fs::write(dir.join("comparison.json"), serde_json::to_string_pretty(&cmp)?)?;
    Ok(cmp)
}
