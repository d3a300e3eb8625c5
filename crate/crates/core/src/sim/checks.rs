//! Post-run checks shared by `verify` and the acceptance tests.

use serde::Serialize;

use crate::dynamics::{MethodKind, SimTrace};
use crate::error::Error;
use crate::sim::config::ScenarioConfig;
use crate::sim::run_config;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    fn new(name: &str, passed: bool, detail: String) -> Self {
        Self {
            name: name.to_string(),
            passed,
            detail,
        }
    }
}

#[derive(Clone, Debug, Default, Serialize)]
pub struct VerifyReport {
    pub name: String,
    pub checks: Vec<Check>,
}

impl VerifyReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }
}

/// First iteration with `φ < 2φ*`, where the gathering transient is over.
pub fn settle_iteration(trace: &SimTrace) -> Option<usize> {
    let phi_star = trace.constants.phi_star;
    (0..trace.steps).find(|&k| trace.iteration(k)[0].phi < 2.0 * phi_star)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct EstimationDominance {
    pub from: usize,
    pub checked: usize,
    pub violations: usize,
    /// Smallest `φ − (c/2)Σ‖g − ∇f‖²` seen.
    pub min_margin: f64,
}

/// `φ(x_k) ≥ (c/2)·Σ_i‖g_i − ∇f_k(x_i)‖²` for `k ≥ from`.
pub fn estimation_dominance(trace: &SimTrace, c_const: f64, from: usize) -> EstimationDominance {
    let mut out = EstimationDominance {
        from,
        checked: 0,
        violations: 0,
        min_margin: f64::INFINITY,
    };
    for k in from..trace.steps {
        let rows = trace.iteration(k);
        let err_sq: f64 = rows.iter().map(|r| r.gradient_error * r.gradient_error).sum();
        let margin = rows[0].phi - 0.5 * c_const * err_sq;
        out.checked += 1;
        if margin < 0.0 {
            out.violations += 1;
        }
        out.min_margin = out.min_margin.min(margin);
    }
    out
}

/// Ratio of the mean error bound to the mean realised error for `k ≥ from`.
pub fn bound_tightness(trace: &SimTrace, from: usize) -> Option<f64> {
    let rows = trace.rows.get(from * trace.agents..)?;
    let bound: f64 = rows.iter().map(|r| r.error_bound).sum();
    let err: f64 = rows.iter().map(|r| r.gradient_error).sum();
    (err > 0.0 && bound.is_finite()).then(|| bound / err)
}

pub fn trace_checks(trace: &SimTrace, cfg: &ScenarioConfig) -> Vec<Check> {
    let mut checks = Vec::new();
    let region = &cfg.scenario.region;
    checks.push(match trace.left_region(region) {
        None => Check::new(
            "operating region",
            true,
            "all positions inside the drift-constant box".into(),
        ),
        Some(k) => Check::new(
            "operating region",
            false,
            format!("an agent left the box at iteration {k}"),
        ),
    });
    if trace.method == MethodKind::Circular {
        return checks;
    }
    match trace.max_bound_violation() {
        Some(v) => checks.push(Check::new(
            "tracking bound dominance",
            v <= 0.0,
            format!("max(measured - bound) = {v:e} over {} rows", trace.rows.len()),
        )),
        None => checks.push(Check::new("tracking bound dominance", true, "no rows".into())),
    }
    let uncertified = trace.rows.iter().filter(|r| r.error_bound.is_nan()).count();
    let exceed = trace.rows.iter().filter(|r| r.gradient_error > r.error_bound).count();
    checks.push(Check::new(
        "gradient error within bound",
        uncertified == 0 && exceed == 0,
        format!("{exceed} rows exceed the bound, {uncertified} rows without a bound"),
    ));
    if trace.method == MethodKind::Composite {
        match settle_iteration(trace) {
            Some(k0) => {
                let dom = estimation_dominance(trace, trace.constants.c_const, k0);
                checks.push(Check::new(
                    "formation dominates estimation error",
                    dom.violations == 0,
                    format!(
                        "from iteration {k0}: {} of {} iterations violate, min margin {:.6e}",
                        dom.violations, dom.checked, dom.min_margin
                    ),
                ));
                if let Some(ratio) = bound_tightness(trace, k0) {
                    checks.push(Check::new(
                        "error bound tightness (informational)",
                        true,
                        format!("mean bound / mean error = {ratio:.3} from iteration {k0}"),
                    ));
                }
            }
            None if trace.steps == 0 => {}
            None => checks.push(Check::new(
                "formation dominates estimation error",
                false,
                "the formation never settled (phi never dropped below 2 phi*)".into(),
            )),
        }
    }
    checks
}

/// Runs `cfg` and evaluates every applicable check.
pub fn verify(cfg: &ScenarioConfig) -> VerifyReport {
    let mut report = VerifyReport {
        name: cfg.name.clone(),
        checks: Vec::new(),
    };
    match run_config(cfg) {
        Ok((trace, _)) => {
            report
                .checks
                .push(Check::new("run completes", true, format!("{} iterations", trace.steps)));
            report.checks.extend(trace_checks(&trace, cfg));
        }
        Err(Error::Diverged { step }) => {
            report.checks.push(Check::new(
                "run completes",
                false,
                format!("diverged at iteration {step}"),
            ));
        }
        Err(e) => report.checks.push(Check::new("run completes", false, e.to_string())),
    }
    report
}
