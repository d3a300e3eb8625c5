//! Closed-loop update laws: noisy gradient descent, the distributed composite
//! dynamics, and the circular-formation baseline. [`run`] drives any of them
//! and records a per-agent trace together with the matching bounds.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::bounds::{
    check_step, minimiser_set_distance_sq, tracking_error, BoundParams, CompositeProblem, Lemma1Tracker,
    Theorem1Tracker,
};
use crate::error::{Error, Result};
use crate::field::{OperatingBox, QuadraticField};
use crate::formation::FormationSpec;
use crate::gradestim::{estimate, GradientEstimate, LocalSamples};

/// Positions beyond this norm are treated as divergence.
pub const DIVERGENCE_NORM: f64 = 1e8;

#[derive(Clone, Debug, PartialEq)]
pub struct SwarmState {
    pub k: usize,
    pub positions: Vec<DVector<f64>>,
}

impl SwarmState {
    pub fn new(k: usize, positions: Vec<DVector<f64>>) -> Result<Self> {
        let dim = positions
            .first()
            .map(|p| p.len())
            .ok_or_else(|| Error::InvalidParameter("swarm needs at least one agent".into()))?;
        if let Some(bad) = positions.iter().find(|p| p.len() != dim) {
            return Err(Error::DimensionMismatch {
                expected: dim,
                found: bad.len(),
            });
        }
        if !positions.iter().all(|p| p.iter().all(|v| v.is_finite())) {
            return Err(Error::InvalidParameter("positions must be finite".into()));
        }
        Ok(Self { k, positions })
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.positions[0].len()
    }

    pub fn centroid(&self) -> DVector<f64> {
        self.positions.iter().fold(DVector::zeros(self.dim()), |acc, p| acc + p) / self.len() as f64
    }

    fn check_diverged(&self, step: usize) -> Result<()> {
        let ok = self
            .positions
            .iter()
            .all(|p| p.iter().all(|v| v.is_finite()) && p.norm() <= DIVERGENCE_NORM);
        if ok {
            Ok(())
        } else {
            Err(Error::Diverged { step })
        }
    }
}

/// Bounded additive gradient noise, uniform in the ball of radius `bound`.
#[derive(Clone, Debug)]
pub struct NoiseModel {
    seed: u64,
    bound: f64,
    rng: ChaCha8Rng,
}

impl NoiseModel {
    pub fn new(seed: u64, bound: f64) -> Result<Self> {
        if !(bound >= 0.0) || !bound.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "noise bound must be finite and ≥ 0, got {bound}"
            )));
        }
        Ok(Self {
            seed,
            bound,
            rng: ChaCha8Rng::seed_from_u64(seed),
        })
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn bound(&self) -> f64 {
        self.bound
    }

    pub fn sample(&mut self, dim: usize) -> DVector<f64> {
        if self.bound == 0.0 {
            return DVector::zeros(dim);
        }
        let dir = loop {
            let v = DVector::<f64>::from_fn(dim, |_, _| self.rng.sample(StandardNormal));
            let n = v.norm();
            if n > 1e-12 {
                break v / n;
            }
        };
        let u: f64 = self.rng.random();
        let mut e = dir * (self.bound * u.powf(1.0 / dim as f64));
        let n = e.norm();
        if n > self.bound {
            e *= self.bound / n;
        }
        e
    }
}

/// `x_{k+1} = x_k − α(∇f_k(x_k) + ε_k)` for every agent independently.
///
/// Returns the new state and the realised noise per agent.
pub fn naive_step(
    state: &SwarmState,
    field: &QuadraticField,
    alpha: f64,
    noise: &mut NoiseModel,
) -> Result<(SwarmState, Vec<DVector<f64>>)> {
    check_step(alpha, field.lipschitz())?;
    if state.dim() != field.dim() {
        return Err(Error::DimensionMismatch {
            expected: field.dim(),
            found: state.dim(),
        });
    }
    let mut eps = Vec::with_capacity(state.len());
    let positions = state
        .positions
        .iter()
        .map(|x| {
            let e = noise.sample(x.len());
            let next = x - (field.gradient_unchecked(state.k, x) + &e) * alpha;
            eps.push(e);
            next
        })
        .collect();
    let next = SwarmState {
        k: state.k + 1,
        positions,
    };
    next.check_diverged(state.k)?;
    Ok((next, eps))
}

/// What one agent may read of the current snapshot.
pub trait Neighbourhood {
    fn position(&self, j: usize) -> &DVector<f64>;
    fn measurement(&self, j: usize) -> f64;
}

/// Positions and field measurements of all agents at one iteration.
#[derive(Clone, Debug)]
pub struct Snapshot {
    pub positions: Vec<DVector<f64>>,
    pub measurements: Vec<f64>,
}

impl Snapshot {
    pub fn measure(state: &SwarmState, field: &QuadraticField) -> Result<Self> {
        let measurements = state
            .positions
            .iter()
            .map(|x| field.value(state.k, x))
            .collect::<Result<_>>()?;
        Ok(Self {
            positions: state.positions.clone(),
            measurements,
        })
    }
}

impl Neighbourhood for Snapshot {
    fn position(&self, j: usize) -> &DVector<f64> {
        &self.positions[j]
    }

    fn measurement(&self, j: usize) -> f64 {
        self.measurements[j]
    }
}

/// Handling of agents whose neighbour directions do not span the space.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RankPolicy {
    /// Use the minimum-norm estimate and leave the error bound undefined.
    #[default]
    Continue,
    /// Abort the step.
    Strict,
}

/// Simplex-gradient estimate of agent `i` and its next position, reading only
/// `{i} ∪ N(i)` from `view`.
pub fn agent_update<V: Neighbourhood + ?Sized>(
    i: usize,
    view: &V,
    formation: &FormationSpec,
    lf: f64,
    alpha: f64,
    policy: RankPolicy,
) -> Result<(DVector<f64>, GradientEstimate)> {
    let samples = LocalSamples {
        position: view.position(i).clone(),
        value: view.measurement(i),
        neighbours: formation
            .neighbours(i)
            .iter()
            .map(|&j| (view.position(j).clone(), view.measurement(j)))
            .collect(),
        lipschitz: lf,
    };
    let est = estimate(&samples)?;
    if policy == RankPolicy::Strict && !est.is_certified() {
        return Err(Error::AgentRankDeficient {
            agent: i,
            rank: est.rank,
            dim: samples.position.len(),
        });
    }
    let g_phi = formation.local_gradient(i, lf, |j| view.position(j));
    let next = &samples.position - (&est.gradient + g_phi) * alpha;
    Ok((next, est))
}

/// Composite dynamics with a validated step size.
#[derive(Clone, Debug)]
pub struct CompositeStepper<'a> {
    field: &'a QuadraticField,
    formation: &'a FormationSpec,
    alpha: f64,
    lf: f64,
    l_phi: f64,
    policy: RankPolicy,
}

impl<'a> CompositeStepper<'a> {
    /// Rejects `α` outside `(0, 1/(L_f + L_φ)]`.
    pub fn new(
        field: &'a QuadraticField,
        formation: &'a FormationSpec,
        alpha: f64,
        policy: RankPolicy,
    ) -> Result<Self> {
        if formation.dim() != field.dim() {
            return Err(Error::DimensionMismatch {
                expected: field.dim(),
                found: formation.dim(),
            });
        }
        let lf = field.lipschitz();
        let (l_phi, _) = formation.lipschitz_pl_constants(lf)?;
        check_step(alpha, lf + l_phi)?;
        Ok(Self {
            field,
            formation,
            alpha,
            lf,
            l_phi,
            policy,
        })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn l_phi(&self) -> f64 {
        self.l_phi
    }

    /// All estimates come from the `k`-snapshot before any position is written.
    pub fn step(&self, state: &SwarmState) -> Result<(SwarmState, Vec<GradientEstimate>)> {
        if state.len() != self.formation.len() {
            return Err(Error::DimensionMismatch {
                expected: self.formation.len(),
                found: state.len(),
            });
        }
        let snap = Snapshot::measure(state, self.field)?;
        let (positions, estimates): (Vec<_>, Vec<_>) = (0..state.len())
            .map(|i| agent_update(i, &snap, self.formation, self.lf, self.alpha, self.policy))
            .collect::<Result<Vec<_>>>()?
            .into_iter()
            .unzip();
        let next = SwarmState {
            k: state.k + 1,
            positions,
        };
        next.check_diverged(state.k)?;
        Ok((next, estimates))
    }
}

/// One synchronous composite step with the default rank policy.
pub fn composite_step(
    state: &SwarmState,
    field: &QuadraticField,
    formation: &FormationSpec,
    alpha: f64,
) -> Result<(SwarmState, Vec<GradientEstimate>)> {
    CompositeStepper::new(field, formation, alpha, RankPolicy::Continue)?.step(state)
}

/// Parameters of the circular baseline.
#[derive(Clone, Debug, PartialEq)]
pub struct CircularParams {
    /// Circle radius `D`.
    pub radius: f64,
    /// Angular speed `ω` per iteration.
    pub omega: f64,
    /// Centre relaxation `ε`.
    pub epsilon: f64,
    /// Low-pass filter coefficient.
    pub alpha: f64,
    /// Multiplier on the measured gradient term; 1 reproduces the method as published.
    pub gain: f64,
    /// Symmetric row-stochastic consensus matrix.
    pub consensus: DMatrix<f64>,
}

impl CircularParams {
    pub fn validate(&self, agents: usize) -> Result<()> {
        let mut problems = Vec::new();
        let p = &self.consensus;
        if p.nrows() != agents || p.ncols() != agents {
            problems.push(format!(
                "consensus matrix is {}x{}, expected {agents}x{agents}",
                p.nrows(),
                p.ncols()
            ));
        } else {
            if p.iter().any(|&v| !(v >= 0.0)) {
                problems.push("consensus matrix has negative entries".into());
            }
            if (0..agents).any(|i| (p.row(i).sum() - 1.0).abs() > 1e-12) {
                problems.push("consensus matrix is not row-stochastic".into());
            }
            if (p - p.transpose()).amax() > 1e-12 {
                problems.push("consensus matrix is not symmetric".into());
            }
        }
        if !(self.radius > 0.0) {
            problems.push("radius must be positive".into());
        }
        if !(self.epsilon > 0.0 && self.epsilon <= 1.0) {
            problems.push("epsilon must lie in (0, 1]".into());
        }
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            problems.push("filter coefficient must lie in (0, 1]".into());
        }
        if !(self.gain > 0.0) || !self.omega.is_finite() {
            problems.push("gain must be positive and omega finite".into());
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidParameter(problems.join("; ")))
        }
    }

    fn unit(&self, phase: f64, k: usize) -> DVector<f64> {
        let theta = phase + self.omega * k as f64;
        DVector::from_vec(vec![theta.cos(), theta.sin()])
    }

    /// Centre-relative descent target `c − gain·(2/D²)·f·(x − c)`.
    fn target(&self, c: &DVector<f64>, x: &DVector<f64>, value: f64) -> DVector<f64> {
        c - (x - c) * (self.gain * 2.0 / (self.radius * self.radius) * value)
    }

    /// Gradient estimate implied by one circle sample, `(2/D²)·f·(x − c)`.
    pub fn gradient_estimate(&self, c: &DVector<f64>, x: &DVector<f64>, value: f64) -> DVector<f64> {
        (x - c) * (2.0 / (self.radius * self.radius) * value)
    }
}

/// Ring consensus: ½ on the diagonal and ¼ to each ring neighbour.
pub fn ring_consensus(n: usize) -> DMatrix<f64> {
    match n {
        0 => DMatrix::zeros(0, 0),
        1 => DMatrix::identity(1, 1),
        2 => DMatrix::from_element(2, 2, 0.5),
        _ => DMatrix::from_fn(n, n, |i, j| {
            if i == j {
                0.5
            } else if (i + 1) % n == j || (j + 1) % n == i {
                0.25
            } else {
                0.0
            }
        }),
    }
}

/// Per-agent state of the circular baseline.
#[derive(Clone, Debug, PartialEq)]
pub struct CircularState {
    pub params: CircularParams,
    pub centers: Vec<DVector<f64>>,
    /// Filtered estimate from the previous iteration.
    pub filtered: Vec<DVector<f64>>,
    /// Filtered estimate from two iterations back.
    pub filtered_prev: Vec<DVector<f64>>,
    /// Consensus variable from the previous iteration.
    pub h: Vec<DVector<f64>>,
    pub phases: Vec<f64>,
}

impl CircularState {
    /// Places agent `i` at phase `2πi/n` on its circle and seeds `h`, both
    /// filter lags and the first consensus value with the initial target.
    pub fn initialize(
        params: CircularParams,
        centers: Vec<DVector<f64>>,
        field: &QuadraticField,
    ) -> Result<(Self, SwarmState)> {
        let n = centers.len();
        if field.dim() != 2 || centers.iter().any(|c| c.len() != 2) {
            return Err(Error::Unsupported(
                "the circular baseline is defined in two dimensions only".into(),
            ));
        }
        params.validate(n)?;
        let phases: Vec<f64> = (0..n).map(|i| std::f64::consts::TAU * i as f64 / n as f64).collect();
        let positions: Vec<DVector<f64>> = centers
            .iter()
            .zip(&phases)
            .map(|(c, &ph)| c + params.unit(ph, 0) * params.radius)
            .collect();
        let h0: Vec<DVector<f64>> = centers
            .iter()
            .zip(&positions)
            .map(|(c, x)| params.target(c, x, field.value_unchecked(0, x)))
            .collect();
        let swarm = SwarmState::new(0, positions)?;
        Ok((
            Self {
                params,
                centers,
                filtered: h0.clone(),
                filtered_prev: h0.clone(),
                h: h0,
                phases,
            },
            swarm,
        ))
    }
}

/// One iteration of the circular baseline, measuring `f_k` at the current positions.
///
/// Also returns the per-agent gradient estimates implied by the measurements.
pub fn circular_step(
    cstate: &CircularState,
    swarm: &SwarmState,
    field: &QuadraticField,
) -> Result<(CircularState, SwarmState, Vec<DVector<f64>>)> {
    let n = swarm.len();
    if field.dim() != 2 || swarm.dim() != 2 {
        return Err(Error::Unsupported(
            "the circular baseline is defined in two dimensions only".into(),
        ));
    }
    let p = &cstate.params;
    if p.consensus.nrows() != n || cstate.centers.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: p.consensus.nrows(),
        });
    }
    let k = swarm.k;
    let mut estimates = Vec::with_capacity(n);
    let mut filtered = Vec::with_capacity(n);
    let mut h_tilde = Vec::with_capacity(n);
    for i in 0..n {
        let (c, x) = (&cstate.centers[i], &swarm.positions[i]);
        let value = field.value_unchecked(k, x);
        estimates.push(p.gradient_estimate(c, x, value));
        let g = p.target(c, x, value);
        filtered.push(&cstate.filtered[i] * (1.0 - p.alpha) + g * p.alpha);
        h_tilde.push(&cstate.h[i] + &cstate.filtered[i] - &cstate.filtered_prev[i]);
    }
    let h: Vec<DVector<f64>> = (0..n)
        .map(|i| (0..n).fold(DVector::zeros(2), |acc, j| acc + &h_tilde[j] * p.consensus[(i, j)]))
        .collect();
    let centers: Vec<DVector<f64>> = (0..n)
        .map(|i| &cstate.centers[i] * (1.0 - p.epsilon) + &h[i] * p.epsilon)
        .collect();
    let positions = centers
        .iter()
        .zip(&cstate.phases)
        .map(|(c, &ph)| c + p.unit(ph, k + 1) * p.radius)
        .collect();
    let next_swarm = SwarmState { k: k + 1, positions };
    next_swarm.check_diverged(k)?;
    let next = CircularState {
        params: p.clone(),
        centers,
        filtered_prev: cstate.filtered.clone(),
        filtered,
        h,
        phases: cstate.phases.clone(),
    };
    Ok((next, next_swarm, estimates))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MethodKind {
    Naive,
    Composite,
    Circular,
}

impl std::fmt::Display for MethodKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            MethodKind::Naive => "naive",
            MethodKind::Composite => "composite",
            MethodKind::Circular => "circular",
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Method {
    Naive { alpha: f64, noise_bound: f64, seed: u64 },
    Composite { alpha: f64, policy: RankPolicy },
    Circular(CircularParams),
}

impl Method {
    pub fn kind(&self) -> MethodKind {
        match self {
            Method::Naive { .. } => MethodKind::Naive,
            Method::Composite { .. } => MethodKind::Composite,
            Method::Circular(_) => MethodKind::Circular,
        }
    }
}

/// Everything [`run`] needs. `initial` holds agent positions, or circle
/// centres for the circular baseline.
#[derive(Clone, Debug)]
pub struct Scenario {
    pub field: QuadraticField,
    pub formation: Option<FormationSpec>,
    pub method: Method,
    pub initial: Vec<DVector<f64>>,
    pub region: OperatingBox,
}

/// One agent at one iteration, describing the state before the update.
///
/// Columns that do not apply to a method hold NaN.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TraceRow {
    pub k: usize,
    pub agent: usize,
    pub position: Vec<f64>,
    pub measurement: f64,
    pub estimate: Vec<f64>,
    pub true_gradient: Vec<f64>,
    pub gradient_error: f64,
    pub error_bound: f64,
    pub phi: f64,
    pub tracking_error: f64,
    pub stacked_tracking_error: f64,
    pub bound: f64,
}

/// Constants the bound columns were computed with.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize)]
pub struct TraceConstants {
    pub lf: f64,
    pub mu_f: f64,
    pub l_phi: f64,
    pub mu_phi: f64,
    pub alpha: f64,
    pub c_const: f64,
    pub phi_star: f64,
    pub eta0: f64,
    pub eta_star: f64,
    pub fhat_star_bound: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SimTrace {
    pub method: MethodKind,
    pub dim: usize,
    pub agents: usize,
    pub steps: usize,
    pub rows: Vec<TraceRow>,
    pub initial: SwarmState,
    pub final_state: SwarmState,
    pub constants: TraceConstants,
}

impl SimTrace {
    /// Rows of iteration `k`, one per agent.
    pub fn iteration(&self, k: usize) -> &[TraceRow] {
        &self.rows[k * self.agents..(k + 1) * self.agents]
    }

    /// Largest `measured − bound` over rows with a bound, per agent and stacked.
    pub fn max_bound_violation(&self) -> Option<f64> {
        self.rows
            .iter()
            .filter(|r| r.bound.is_finite())
            .flat_map(|r| [r.tracking_error - r.bound, r.stacked_tracking_error - r.bound])
            .filter(|v| !v.is_nan())
            .reduce(f64::max)
    }

    /// First iteration at which some agent was outside `region`, including the final state.
    pub fn left_region(&self, region: &OperatingBox) -> Option<usize> {
        let from_rows = self
            .rows
            .iter()
            .find(|r| !region.contains(&DVector::from_row_slice(&r.position)));
        match from_rows {
            Some(r) => Some(r.k),
            None => self
                .final_state
                .positions
                .iter()
                .any(|p| !region.contains(p))
                .then_some(self.steps),
        }
    }
}

fn vec_of(v: &DVector<f64>) -> Vec<f64> {
    v.iter().copied().collect()
}

/// Runs `steps` iterations and records the trace. Row `k` describes the state
/// `x_k`; its `bound` column bounds the tracking error of that state.
pub fn run(scenario: &Scenario, steps: usize) -> Result<SimTrace> {
    match &scenario.method {
        Method::Naive {
            alpha,
            noise_bound,
            seed,
        } => run_naive(scenario, steps, *alpha, *noise_bound, *seed),
        Method::Composite { alpha, policy } => run_composite(scenario, steps, *alpha, *policy),
        Method::Circular(params) => run_circular(scenario, steps, params),
    }
}

fn run_naive(scenario: &Scenario, steps: usize, alpha: f64, noise_bound: f64, seed: u64) -> Result<SimTrace> {
    let field = &scenario.field;
    let (mu_f, lf) = field.eigen_bounds();
    let fc = field.constants(&scenario.region, steps.max(1))?;
    let params = BoundParams {
        alpha,
        lf,
        mu_f,
        l_phi: 0.0,
        mu_phi: 0.0,
        c_const: 0.0,
        eta0: fc.eta0,
        eta_star: fc.eta_star,
    };
    params.validate_naive()?;
    let mut noise = NoiseModel::new(seed, noise_bound)?;
    let mut state = SwarmState::new(0, scenario.initial.clone())?;
    let initial = state.clone();
    let n = state.len();
    let d0: Vec<f64> = state
        .positions
        .iter()
        .map(|x| (x - field.minimizer(0)).norm_squared())
        .collect();
    let mut trackers: Vec<Lemma1Tracker> = d0
        .iter()
        .map(|&d| Lemma1Tracker::new(params, d))
        .collect::<Result<_>>()?;
    let mut bounds: Vec<f64> = d0.iter().map(|d| lf / mu_f * 0.5 * d).collect();
    let mut rows = Vec::with_capacity(steps * n);
    for _ in 0..steps {
        let k = state.k;
        let grads: Vec<DVector<f64>> = state.positions.iter().map(|x| field.gradient_unchecked(k, x)).collect();
        let (next, eps) = naive_step(&state, field, alpha, &mut noise)?;
        for i in 0..n {
            let x = &state.positions[i];
            let est = &grads[i] + &eps[i];
            rows.push(TraceRow {
                k,
                agent: i,
                position: vec_of(x),
                measurement: field.value_unchecked(k, x),
                estimate: vec_of(&est),
                true_gradient: vec_of(&grads[i]),
                gradient_error: eps[i].norm(),
                error_bound: noise_bound,
                phi: f64::NAN,
                tracking_error: tracking_error(x, field, k),
                stacked_tracking_error: f64::NAN,
                bound: bounds[i],
            });
            bounds[i] = trackers[i].push(eps[i].norm());
        }
        state = next;
    }
    Ok(SimTrace {
        method: MethodKind::Naive,
        dim: field.dim(),
        agents: n,
        steps,
        rows,
        initial,
        final_state: state,
        constants: TraceConstants {
            lf,
            mu_f,
            alpha,
            eta0: fc.eta0,
            eta_star: fc.eta_star,
            ..Default::default()
        },
    })
}

fn run_composite(scenario: &Scenario, steps: usize, alpha: f64, policy: RankPolicy) -> Result<SimTrace> {
    let field = &scenario.field;
    let formation = scenario
        .formation
        .as_ref()
        .ok_or_else(|| Error::InvalidParameter("composite dynamics need a formation".into()))?;
    let stepper = CompositeStepper::new(field, formation, alpha, policy)?;
    let (mu_f, lf) = field.eigen_bounds();
    let (l_phi, mu_phi) = formation.lipschitz_pl_constants(lf)?;
    let problem = CompositeProblem::new(field, formation)?;
    let (eta0, eta_star) = problem.drift_constants(&scenario.region, steps.max(1))?;
    let params = BoundParams {
        alpha,
        lf,
        mu_f,
        l_phi,
        mu_phi,
        c_const: formation.c_const,
        eta0,
        eta_star,
    };
    params.validate_composite()?;
    let fhat_bound =
        |k: usize| formation.phi_star + 0.5 * lf.min(l_phi) * minimiser_set_distance_sq(&field.minimizer(k), formation);

    let mut state = SwarmState::new(0, scenario.initial.clone())?;
    let initial = state.clone();
    let n = state.len();
    let d0_sq = 2.0 * problem.stacked_tracking_error(0, &state.positions);
    let mut tracker = Theorem1Tracker::new(params, d0_sq)?;
    let mut bound = (lf + l_phi) / mu_f * 0.5 * d0_sq;
    let mut rows = Vec::with_capacity(steps * n);
    for _ in 0..steps {
        let k = state.k;
        let (next, estimates) = stepper.step(&state)?;
        let phi = formation.potential(&state.positions, lf)?;
        let stacked = problem.stacked_tracking_error(k, &state.positions);
        for (i, est) in estimates.iter().enumerate() {
            let x = &state.positions[i];
            let grad = field.gradient_unchecked(k, x);
            rows.push(TraceRow {
                k,
                agent: i,
                position: vec_of(x),
                measurement: field.value_unchecked(k, x),
                estimate: vec_of(&est.gradient),
                true_gradient: vec_of(&grad),
                gradient_error: (&est.gradient - &grad).norm(),
                error_bound: est.error_bound.unwrap_or(f64::NAN),
                phi,
                tracking_error: tracking_error(x, field, k),
                stacked_tracking_error: stacked,
                bound,
            });
        }
        bound = tracker.push(fhat_bound(k));
        state = next;
    }
    Ok(SimTrace {
        method: MethodKind::Composite,
        dim: field.dim(),
        agents: n,
        steps,
        rows,
        initial,
        final_state: state,
        constants: TraceConstants {
            lf,
            mu_f,
            l_phi,
            mu_phi,
            alpha,
            c_const: formation.c_const,
            phi_star: formation.phi_star,
            eta0,
            eta_star,
            fhat_star_bound: fhat_bound(0),
        },
    })
}

fn run_circular(scenario: &Scenario, steps: usize, params: &CircularParams) -> Result<SimTrace> {
    let field = &scenario.field;
    let (mu_f, lf) = field.eigen_bounds();
    let (mut cstate, mut swarm) = CircularState::initialize(params.clone(), scenario.initial.clone(), field)?;
    let initial = swarm.clone();
    let n = swarm.len();
    let mut rows = Vec::with_capacity(steps * n);
    for _ in 0..steps {
        let k = swarm.k;
        let (next_c, next_s, estimates) = circular_step(&cstate, &swarm, field)?;
        for (i, est) in estimates.iter().enumerate() {
            let x = &swarm.positions[i];
            let grad = field.gradient_unchecked(k, x);
            rows.push(TraceRow {
                k,
                agent: i,
                position: vec_of(x),
                measurement: field.value_unchecked(k, x),
                estimate: vec_of(est),
                true_gradient: vec_of(&grad),
                gradient_error: (est - &grad).norm(),
                error_bound: f64::NAN,
                phi: f64::NAN,
                tracking_error: tracking_error(x, field, k),
                stacked_tracking_error: f64::NAN,
                bound: f64::NAN,
            });
        }
        cstate = next_c;
        swarm = next_s;
    }
    Ok(SimTrace {
        method: MethodKind::Circular,
        dim: 2,
        agents: n,
        steps,
        rows,
        initial,
        final_state: swarm,
        constants: TraceConstants {
            lf,
            mu_f,
            alpha: params.alpha,
            ..Default::default()
        },
    })
}
