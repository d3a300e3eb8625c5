//! Closed-form tracking bounds for the naive and composite dynamics, and
//! the error metrics they are compared against.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::field::{OperatingBox, QuadraticField};
use crate::formation::FormationSpec;

const STEP_SLACK: f64 = 1e-12;

/// Constants entering the bounds. `l_phi`/`mu_phi` are zero for the naive dynamics.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BoundParams {
    pub alpha: f64,
    pub lf: f64,
    pub mu_f: f64,
    pub l_phi: f64,
    pub mu_phi: f64,
    pub c_const: f64,
    pub eta0: f64,
    pub eta_star: f64,
}

impl BoundParams {
    /// `μ′ = μ_f − 1/c`.
    pub fn mu_prime(&self) -> f64 {
        self.mu_f - 1.0 / self.c_const
    }

    /// `L_f + L_φ`.
    pub fn composite_lipschitz(&self) -> f64 {
        self.lf + self.l_phi
    }

    fn eta(&self) -> f64 {
        self.eta0 + self.eta_star
    }

    pub fn validate_naive(&self) -> Result<()> {
        check_common(self)?;
        check_step(self.alpha, self.lf)
    }

    pub fn validate_composite(&self) -> Result<()> {
        check_common(self)?;
        if !(self.c_const > 0.0) || !(self.mu_prime() > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "need μ_f − 1/c > 0 (μ_f = {}, c = {})",
                self.mu_f, self.c_const
            )));
        }
        check_step(self.alpha, self.composite_lipschitz())
    }
}

fn check_common(p: &BoundParams) -> Result<()> {
    let finite = [p.alpha, p.lf, p.mu_f, p.l_phi, p.mu_phi, p.c_const, p.eta0, p.eta_star]
        .iter()
        .all(|v| v.is_finite());
    if !finite || !(p.mu_f > 0.0) || p.lf < p.mu_f || p.eta0 < 0.0 || p.eta_star < 0.0 {
        return Err(Error::InvalidParameter(format!("inconsistent bound constants {p:?}")));
    }
    Ok(())
}

/// Accepts `0 < α ≤ 1/lipschitz`.
pub fn check_step(alpha: f64, lipschitz: f64) -> Result<()> {
    let max = 1.0 / lipschitz;
    if !(alpha > 0.0) || alpha > max * (1.0 + STEP_SLACK) {
        return Err(Error::StepSizeOutOfRange { alpha, max });
    }
    Ok(())
}

/// `½‖x − x*(k)‖²`.
pub fn tracking_error(x: &DVector<f64>, field: &QuadraticField, k: usize) -> f64 {
    0.5 * (x - field.minimizer(k)).norm_squared()
}

/// `Σ_{t=0}^{k} r^{k−t} w_t`.
fn discounted_sum(r: f64, weights: &[f64], k: usize) -> f64 {
    weights[..=k].iter().fold(0.0, |acc, w| r * acc + w)
}

fn require_len(len: usize, k: usize) -> Result<()> {
    if len < k + 1 {
        return Err(Error::InvalidParameter(format!(
            "need {} sequence entries, got {len}",
            k + 1
        )));
    }
    Ok(())
}

/// Upper bound on `½d(x_{k+1}, X*_{k+1})²` for noisy gradient descent:
///
/// `r^k/μ·(L/2·d₀² − η* − η₀) + α/(2μ)·Σ_t r^{k−t}‖ε_t‖² + (η* + η₀)/(μ²α)`, `r = 1 − αμ`.
///
/// `eps_norms[t]` is `‖ε_t‖`. For a drifting field (`η > 0`) this closed form
/// is only guaranteed when `αμ ≤ ½`.
pub fn lemma1_bound(params: &BoundParams, d0_sq: f64, eps_norms: &[f64], k: usize) -> Result<f64> {
    params.validate_naive()?;
    require_len(eps_norms.len(), k)?;
    let sq: Vec<f64> = eps_norms[..=k].iter().map(|e| e * e).collect();
    Ok(lemma1_from_sum(
        params,
        d0_sq,
        discounted_sum(1.0 - params.alpha * params.mu_f, &sq, k),
        k,
    ))
}

fn lemma1_from_sum(p: &BoundParams, d0_sq: f64, noise_sum: f64, k: usize) -> f64 {
    let r = 1.0 - p.alpha * p.mu_f;
    r.powf(k as f64) / p.mu_f * (0.5 * p.lf * d0_sq - p.eta())
        + p.alpha / (2.0 * p.mu_f) * noise_sum
        + p.eta() / (p.mu_f * p.mu_f * p.alpha)
}

/// `k → ∞` value of [`lemma1_bound`] for `‖ε_t‖ ≡ eps`.
pub fn lemma1_limit(params: &BoundParams, eps: f64) -> f64 {
    eps * eps / (2.0 * params.mu_f * params.mu_f) + params.eta() / (params.mu_f * params.mu_f * params.alpha)
}

/// Upper bound on `½d(x_{k+1}, X*_{f̂_{k+1}})²` for the composite dynamics:
///
/// `r^k/μ_f·(L̂/2·d₀² − η* − η₀) + α/(cμ_f)·Σ_t r^{k−t} f̂*_t + (η* + η₀)/(μ_f μ′ α)`,
/// `r = 1 − αμ′`, `L̂ = L_f + L_φ`.
pub fn theorem1_bound(params: &BoundParams, d0_sq: f64, fhat_star: &[f64], k: usize) -> Result<f64> {
    params.validate_composite()?;
    require_len(fhat_star.len(), k)?;
    let r = 1.0 - params.alpha * params.mu_prime();
    Ok(theorem1_from_sum(params, d0_sq, discounted_sum(r, fhat_star, k), k))
}

fn theorem1_from_sum(p: &BoundParams, d0_sq: f64, fhat_sum: f64, k: usize) -> f64 {
    let mp = p.mu_prime();
    let r = 1.0 - p.alpha * mp;
    r.powf(k as f64) / p.mu_f * (0.5 * p.composite_lipschitz() * d0_sq - p.eta())
        + p.alpha / (p.c_const * p.mu_f) * fhat_sum
        + p.eta() / (p.mu_f * mp * p.alpha)
}

/// Limit of [`theorem1_bound`] for `f̂*_t ≡ fhat_sup`, taken from the series:
/// `f̂*_sup/(cμ_f μ′) + (η* + η₀)/(μ_f μ′ α)`.
pub fn theorem1_limit(params: &BoundParams, fhat_sup: f64) -> Result<f64> {
    params.validate_composite()?;
    let mp = params.mu_prime();
    Ok(fhat_sup / (params.c_const * params.mu_f * mp) + params.eta() / (params.mu_f * mp * params.alpha))
}

/// The limit with `f̂*_sup/μ′` as the leading coefficient, as usually stated.
/// Differs from [`theorem1_limit`] unless `cμ_f = 1`.
pub fn theorem1_limit_stated(params: &BoundParams, fhat_sup: f64) -> Result<f64> {
    params.validate_composite()?;
    let mp = params.mu_prime();
    Ok(fhat_sup / mp + params.eta() / (params.mu_f * mp * params.alpha))
}

/// Streams [`lemma1_bound`] one noise sample at a time.
#[derive(Clone, Debug)]
pub struct Lemma1Tracker {
    params: BoundParams,
    d0_sq: f64,
    sum: f64,
    k: Option<usize>,
}

impl Lemma1Tracker {
    pub fn new(params: BoundParams, d0_sq: f64) -> Result<Self> {
        params.validate_naive()?;
        Ok(Self {
            params,
            d0_sq,
            sum: 0.0,
            k: None,
        })
    }

    /// Adds `‖ε_k‖` and returns the bound on `½d(x_{k+1})²`.
    pub fn push(&mut self, eps_norm: f64) -> f64 {
        let r = 1.0 - self.params.alpha * self.params.mu_f;
        self.sum = r * self.sum + eps_norm * eps_norm;
        let k = self.k.map_or(0, |k| k + 1);
        self.k = Some(k);
        lemma1_from_sum(&self.params, self.d0_sq, self.sum, k)
    }
}

/// Streams [`theorem1_bound`] one `f̂*_t` value at a time.
#[derive(Clone, Debug)]
pub struct Theorem1Tracker {
    params: BoundParams,
    d0_sq: f64,
    sum: f64,
    k: Option<usize>,
}

impl Theorem1Tracker {
    pub fn new(params: BoundParams, d0_sq: f64) -> Result<Self> {
        params.validate_composite()?;
        Ok(Self {
            params,
            d0_sq,
            sum: 0.0,
            k: None,
        })
    }

    pub fn push(&mut self, fhat_star: f64) -> f64 {
        let r = 1.0 - self.params.alpha * self.params.mu_prime();
        self.sum = r * self.sum + fhat_star;
        let k = self.k.map_or(0, |k| k + 1);
        self.k = Some(k);
        theorem1_from_sum(&self.params, self.d0_sq, self.sum, k)
    }
}

/// Squared distance between the stacked point with every agent at `x_star`
/// and the nearest translate of the ideal formation.
pub fn minimiser_set_distance_sq(x_star: &DVector<f64>, formation: &FormationSpec) -> f64 {
    let ideal = formation.ideal_positions();
    let n = ideal.len() as f64;
    // best translation t solves min_t Σ‖x* − δ_i − t‖²
    let t = ideal
        .iter()
        .fold(DVector::zeros(x_star.len()), |acc, d| acc + (x_star - d))
        / n;
    ideal.iter().map(|d| (x_star - d - &t).norm_squared()).sum()
}

pub fn minimiser_set_distance(x_star: &DVector<f64>, formation: &FormationSpec) -> f64 {
    minimiser_set_distance_sq(x_star, formation).sqrt()
}

/// Upper bound on `f̂*_k − F*_k`: `φ* + min(L_f, L_φ)/2·d(X*_F, X*_φ)²`.
pub fn lemma2_fhat_star_bound(formation: &FormationSpec, field: &QuadraticField, k: usize) -> Result<f64> {
    let lf = field.lipschitz();
    let (l_phi, _) = formation.lipschitz_pl_constants(lf)?;
    let dist_sq = minimiser_set_distance_sq(&field.minimizer(k), formation);
    Ok(formation.phi_star + 0.5 * lf.min(l_phi) * dist_sq)
}

/// Exact minimiser of `f̂_k(X) = Σ_i f_k(x_i) + φ(X)`.
///
/// The stacked Hessian `I ⊗ Q_s + H ⊗ I_d` is constant, so it is factored once.
#[derive(Clone, Debug)]
pub struct CompositeProblem {
    field: QuadraticField,
    formation: FormationSpec,
    lu: nalgebra::LU<f64, nalgebra::Dyn, nalgebra::Dyn>,
    // 4L_f Σ_{j∈N(i)} x̂_ij, stacked
    formation_rhs: DVector<f64>,
}

impl CompositeProblem {
    pub fn new(field: &QuadraticField, formation: &FormationSpec) -> Result<Self> {
        let (n, d) = (formation.len(), field.dim());
        if formation.dim() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                found: formation.dim(),
            });
        }
        let lf = field.lipschitz();
        let h = formation.hessian_factor(lf);
        let qs = field.q_sym();
        let mut hess = DMatrix::zeros(n * d, n * d);
        let mut rhs = DVector::zeros(n * d);
        for i in 0..n {
            for a in 0..d {
                for b in 0..d {
                    hess[(i * d + a, i * d + b)] += qs[(a, b)];
                }
            }
            for j in 0..n {
                for a in 0..d {
                    hess[(i * d + a, j * d + a)] += h[(i, j)];
                }
            }
            for &j in formation.neighbours(i) {
                let mut seg = rhs.rows_mut(i * d, d);
                seg += formation.displacement(i, j) * (4.0 * lf);
            }
        }
        Ok(Self {
            field: field.clone(),
            formation: formation.clone(),
            lu: hess.lu(),
            formation_rhs: rhs,
        })
    }

    pub fn minimizer(&self, k: usize) -> Vec<DVector<f64>> {
        let (n, d) = (self.formation.len(), self.field.dim());
        let c = self.field.source(k);
        let per_agent = self.field.q_sym() * &c - self.field.zeta();
        let mut rhs = self.formation_rhs.clone();
        for i in 0..n {
            let mut seg = rhs.rows_mut(i * d, d);
            seg += &per_agent;
        }
        let x = self.lu.solve(&rhs).expect("composite Hessian is positive definite");
        (0..n).map(|i| x.rows(i * d, d).into_owned()).collect()
    }

    pub fn value(&self, k: usize, x: &[DVector<f64>]) -> Result<f64> {
        let mut total = self.formation.potential(x, self.field.lipschitz())?;
        for xi in x {
            total += self.field.value(k, xi)?;
        }
        Ok(total)
    }

    /// `f̂*_k`.
    pub fn optimal_value(&self, k: usize) -> f64 {
        self.value(k, &self.minimizer(k))
            .expect("minimiser has consistent shape")
    }

    /// `f̂*_k − F*_k`, the gap bounded by [`lemma2_fhat_star_bound`].
    pub fn optimal_gap(&self, k: usize) -> f64 {
        self.optimal_value(k) - self.formation.len() as f64 * self.field.optimal_value(k)
    }

    /// `½‖X − X*_{f̂_k}‖²`.
    pub fn stacked_tracking_error(&self, k: usize, x: &[DVector<f64>]) -> f64 {
        self.minimizer(k)
            .iter()
            .zip(x)
            .map(|(m, xi)| (xi - m).norm_squared())
            .sum::<f64>()
            * 0.5
    }

    /// `(η̂₀, η̂*)`: drift of `f̂` is `n·η₀` by summation; `η̂*` is evaluated from
    /// the exact optimum for `k < horizon`.
    pub fn drift_constants(&self, region: &OperatingBox, horizon: usize) -> Result<(f64, f64)> {
        let base = self.field.constants(region, horizon)?;
        let mut eta_star = 0.0_f64;
        if !self.field.is_static() {
            let mut prev = self.optimal_value(0);
            for k in 0..horizon {
                let next = self.optimal_value(k + 1);
                eta_star = eta_star.max((next - prev).abs());
                prev = next;
            }
        }
        Ok((self.formation.len() as f64 * base.eta0, eta_star))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::{reference_field, reference_path, PathComponent, SourcePath};
    use crate::formation::{make_hexagon, Topology};
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::collections::BTreeMap;

    fn naive_params(alpha: f64, eta: f64) -> BoundParams {
        BoundParams {
            alpha,
            lf: 2.0,
            mu_f: 1.0,
            l_phi: 0.0,
            mu_phi: 0.0,
            c_const: 2.0,
            eta0: eta,
            eta_star: eta,
        }
    }

    fn composite_params(alpha: f64, eta: f64) -> BoundParams {
        BoundParams {
            alpha,
            lf: 2.0,
            mu_f: 1.0,
            l_phi: 8.0,
            mu_phi: 2.0,
            c_const: 2.0,
            eta0: eta,
            eta_star: 0.0,
        }
    }

    fn v(xs: &[f64]) -> DVector<f64> {
        DVector::from_row_slice(xs)
    }

    #[test]
    fn tracking_error_examples() {
        let f = QuadraticField::new(
            DMatrix::from_element(1, 1, 2.0),
            DVector::zeros(1),
            0.0,
            SourcePath::Shared(PathComponent {
                offset: 3.0,
                ..Default::default()
            }),
        )
        .unwrap();
        assert_eq!(tracking_error(&v(&[3.0]), &f, 0), 0.0);
        assert_eq!(tracking_error(&v(&[5.0]), &f, 7), 2.0);
    }

    #[test]
    fn tracking_error_against_grid_search() {
        // nearly flat direction: the grid minimiser of ½‖x − m‖² over a fine
        // grid around the analytic minimiser agrees with the closed form
        let f = QuadraticField::new(
            DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 1e-6]),
            v(&[0.3, -2e-7]),
            0.0,
            SourcePath::fixed_at_origin(),
        )
        .unwrap();
        let m = f.minimizer(0);
        assert_relative_eq!(m[1], 0.2, epsilon = 1e-9);
        let x = v(&[1.0, 1.0]);
        let mut best = (f64::INFINITY, v(&[0.0, 0.0]));
        for a in -200..=200 {
            for b in -200..=200 {
                let p = v(&[-0.3 + a as f64 * 1e-3, 0.2 + b as f64 * 1e-3]);
                let val = f.value(0, &p).unwrap();
                if val < best.0 {
                    best = (val, p);
                }
            }
        }
        assert_relative_eq!(
            0.5 * (&x - &best.1).norm_squared(),
            tracking_error(&x, &f, 0),
            epsilon = 1e-9
        );
    }

    #[test]
    fn lemma1_noise_free_is_geometric() {
        let p = naive_params(0.25, 0.0);
        let zeros = vec![0.0; 50];
        for k in [0, 1, 10, 49] {
            let b = lemma1_bound(&p, 4.0, &zeros, k).unwrap();
            assert_relative_eq!(b, (2.0 / 2.0) * 0.75f64.powi(k as i32) * 4.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn lemma1_constant_noise_limit() {
        let p = naive_params(0.4, 0.01);
        let e = 0.3;
        let eps = vec![e; 2000];
        let lim = lemma1_limit(&p, e);
        assert_relative_eq!(lim, e * e / 2.0 + 0.02 / 0.4, epsilon = 1e-15);
        assert_relative_eq!(lemma1_bound(&p, 1.0, &eps, 1999).unwrap(), lim, epsilon = 1e-12);
    }

    #[test]
    fn lemma1_rejects_bad_input() {
        assert!(matches!(
            lemma1_bound(&naive_params(0.6, 0.0), 1.0, &[0.0], 0),
            Err(Error::StepSizeOutOfRange { .. })
        ));
        assert!(lemma1_bound(&naive_params(0.5, 0.0), 1.0, &[0.0], 1).is_err());
        assert!(lemma1_bound(&naive_params(0.5, 0.0), 1.0, &[0.0], 0).is_ok());
    }

    #[test]
    fn theorem1_noise_free_is_geometric() {
        let p = composite_params(0.1, 0.0);
        let zeros = vec![0.0; 30];
        for k in [0, 5, 29] {
            let b = theorem1_bound(&p, 2.0, &zeros, k).unwrap();
            assert_relative_eq!(b, 0.95f64.powi(k as i32) * 10.0 * 2.0 / 2.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn theorem1_limits() {
        let p = composite_params(0.1, 0.3);
        let fs = vec![1.5; 3000];
        let lim = theorem1_limit(&p, 1.5).unwrap();
        assert_relative_eq!(theorem1_bound(&p, 3.0, &fs, 2999).unwrap(), lim, epsilon = 1e-9);
        // μ′ = 0.5, c = 2
        assert_relative_eq!(lim, 1.5 / (2.0 * 0.5) + 0.3 / (0.5 * 0.1), epsilon = 1e-12);
        assert_relative_eq!(
            theorem1_limit_stated(&p, 1.5).unwrap(),
            1.5 / 0.5 + 0.3 / 0.05,
            epsilon = 1e-12
        );

        let mut bad = p;
        bad.c_const = 0.5;
        assert!(theorem1_bound(&bad, 1.0, &fs, 0).is_err());
        assert!(theorem1_limit(&bad, 1.0).is_err());
        let mut big_step = p;
        big_step.alpha = 0.2;
        assert!(matches!(
            theorem1_bound(&big_step, 1.0, &fs, 0),
            Err(Error::StepSizeOutOfRange { .. })
        ));
    }

    #[test]
    fn trackers_match_batch_evaluation() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let eps: Vec<f64> = (0..200).map(|_| rng.random_range(0.0..1.0)).collect();
        let p = naive_params(0.3, 0.02);
        let mut t = Lemma1Tracker::new(p, 2.5).unwrap();
        for (k, e) in eps.iter().enumerate() {
            assert_relative_eq!(
                t.push(*e),
                lemma1_bound(&p, 2.5, &eps, k).unwrap(),
                max_relative = 1e-12
            );
        }
        let q = composite_params(0.05, 0.02);
        let mut t = Theorem1Tracker::new(q, 2.5).unwrap();
        for (k, e) in eps.iter().enumerate() {
            assert_relative_eq!(
                t.push(*e),
                theorem1_bound(&q, 2.5, &eps, k).unwrap(),
                max_relative = 1e-12
            );
        }
    }

    #[test]
    fn reference_closed_form_reached_at_ten_time_constants() {
        let f = reference_field(reference_path());
        let (mu, lf) = f.eigen_bounds();
        let p = BoundParams {
            alpha: 1.0 / lf,
            lf,
            mu_f: mu,
            l_phi: 0.0,
            mu_phi: 0.0,
            c_const: 2.0 / mu,
            eta0: 0.0,
            eta_star: 0.0,
        };
        let k = 10 * (1.0 / (p.alpha * mu)).ceil() as usize;
        let e = 0.5;
        let b = lemma1_bound(&p, 1.0, &vec![e; k + 1], k).unwrap();
        assert!((b - lemma1_limit(&p, e)).abs() <= 1e-6 * lemma1_limit(&p, e));
    }

    #[test]
    fn set_distance_examples() {
        let hex = make_hexagon(1.7).unwrap();
        let r2 = 1.7 * 1.7;
        for xs in [v(&[0.0, 0.0]), v(&[12.0, -40.0])] {
            assert_relative_eq!(minimiser_set_distance_sq(&xs, &hex), 6.0 * r2, epsilon = 1e-10);
        }
        let single = FormationSpec::new(
            Topology::from_neighbour_lists(vec![vec![]]).unwrap(),
            2,
            BTreeMap::new(),
        )
        .unwrap();
        assert_eq!(minimiser_set_distance(&v(&[1.0, 2.0]), &single), 0.0);
    }

    #[test]
    fn set_distance_matches_numeric_translation_search() {
        let hex = make_hexagon(3.0).unwrap();
        let xs = v(&[2.0, 5.0]);
        let mut best = f64::INFINITY;
        for a in -100..=100 {
            for b in -100..=100 {
                let t = v(&[2.0 + a as f64 * 0.02, 5.0 + b as f64 * 0.02]);
                let d: f64 = hex
                    .ideal_positions()
                    .iter()
                    .map(|p| (&xs - p - &t).norm_squared())
                    .sum();
                best = best.min(d);
            }
        }
        assert_relative_eq!(best, minimiser_set_distance_sq(&xs, &hex), epsilon = 1e-9);
    }

    #[test]
    fn lemma2_examples() {
        let field = reference_field(reference_path());
        let lf = field.lipschitz();
        let hex = make_hexagon(2.0).unwrap().with_constants(0.7, 1.0);
        let b = lemma2_fhat_star_bound(&hex, &field, 0).unwrap();
        assert_relative_eq!(b, 0.7 + 0.5 * lf * 6.0 * 4.0, epsilon = 1e-10);
        let big = make_hexagon(6.0).unwrap().with_constants(0.7, 1.0);
        let bb = lemma2_fhat_star_bound(&big, &field, 0).unwrap();
        assert_relative_eq!(bb - 0.7, 9.0 * (b - 0.7), epsilon = 1e-9);
    }

    #[test]
    fn lemma2_dominates_exact_gap_on_presets() {
        for f in [
            reference_field(reference_path()),
            reference_field(SourcePath::fixed_at_origin()),
        ] {
            for form in [
                make_hexagon(3.0).unwrap(),
                crate::formation::make_rectangle(3.0).unwrap(),
            ] {
                let form = form.with_constants(1.0, 2.0);
                let prob = CompositeProblem::new(&f, &form).unwrap();
                for k in [0, 100, 1000] {
                    assert!(prob.optimal_gap(k) <= lemma2_fhat_star_bound(&form, &f, k).unwrap());
                }
            }
        }
    }

    #[test]
    fn lemma2_dominates_multistart_search() {
        let field = reference_field(reference_path());
        let lf = field.lipschitz();
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let cases = [
            (vec![vec![1], vec![0]], vec![v(&[0.0, 0.0]), v(&[2.0, 1.0])]),
            (
                vec![vec![1, 2], vec![0, 2], vec![0, 1]],
                vec![v(&[0.0, 0.0]), v(&[1.5, 0.0]), v(&[0.0, 2.5])],
            ),
        ];
        for (lists, pts) in cases {
            let form = FormationSpec::from_positions(Topology::from_neighbour_lists(lists).unwrap(), &pts)
                .unwrap()
                .with_constants(0.4, 1.0);
            let n = form.len();
            let bound = lemma2_fhat_star_bound(&form, &field, 10).unwrap();
            let prob = CompositeProblem::new(&field, &form).unwrap();
            let (l_phi, _) = form.lipschitz_pl_constants(lf).unwrap();
            let step = 1.0 / (lf + l_phi);
            let mut best = f64::INFINITY;
            for _ in 0..1000 {
                let mut x: Vec<DVector<f64>> = (0..n)
                    .map(|_| v(&[rng.random_range(-30.0..30.0), rng.random_range(-30.0..30.0)]))
                    .collect();
                for _ in 0..60 {
                    let g_phi = form.gradient(&x, lf).unwrap();
                    for i in 0..n {
                        let g = field.gradient(10, &x[i]).unwrap() + &g_phi[i];
                        x[i] -= g * step;
                    }
                }
                best = best.min(prob.value(10, &x).unwrap());
            }
            assert!(best >= prob.optimal_value(10) - 1e-9);
            assert!(best <= bound);
        }
    }

    #[test]
    fn composite_minimiser_is_stationary() {
        let field = reference_field(reference_path());
        let lf = field.lipschitz();
        let form = make_hexagon(3.0).unwrap().with_constants(2.0, 1.0);
        let prob = CompositeProblem::new(&field, &form).unwrap();
        let x = prob.minimizer(250);
        let g_phi = form.gradient(&x, lf).unwrap();
        for i in 0..6 {
            let g = field.gradient(250, &x[i]).unwrap() + &g_phi[i];
            assert!(g.norm() < 1e-9);
        }
        // translating field: optimum value does not move
        assert_relative_eq!(prob.optimal_value(0), prob.optimal_value(777), max_relative = 1e-12);
    }

    #[test]
    fn composite_drift_constants() {
        let field = reference_field(reference_path());
        let form = make_hexagon(3.0).unwrap();
        let prob = CompositeProblem::new(&field, &form).unwrap();
        let region = OperatingBox::new(v(&[-60.0, -60.0]), v(&[90.0, 90.0])).unwrap();
        let (eta0, eta_star) = prob.drift_constants(&region, 300).unwrap();
        let base = field.constants(&region, 300).unwrap();
        assert_relative_eq!(eta0, 6.0 * base.eta0, max_relative = 1e-15);
        assert!(eta_star < 1e-9);
    }

    proptest! {
        #[test]
        fn lemma1_monotone_in_noise(
            alpha in 0.01f64..0.5,
            d0 in 0.0f64..10.0,
            eps in proptest::collection::vec(0.0f64..2.0, 1..40),
            idx in 0usize..40,
            bump in 0.0f64..1.0,
        ) {
            let p = naive_params(alpha, 0.05);
            let k = eps.len() - 1;
            let base = lemma1_bound(&p, d0, &eps, k).unwrap();
            let mut more = eps.clone();
            let i = idx % eps.len();
            more[i] += bump;
            prop_assert!(lemma1_bound(&p, d0, &more, k).unwrap() >= base);
        }

        #[test]
        fn bounds_approach_closed_forms(
            amu in 0.05f64..1.0,
            d0 in 0.0f64..5.0,
            e in 0.0f64..2.0,
            eta in 0.0f64..0.1,
        ) {
            // the remaining gap after k steps is exactly r^k times a fixed start term
            let p = BoundParams { alpha: amu, lf: 1.0, mu_f: 1.0, l_phi: 0.0, mu_phi: 0.0, c_const: 2.0, eta0: eta, eta_star: 0.0 };
            let k = 10 * (1.0 / amu).ceil() as usize;
            let lim = lemma1_limit(&p, e);
            let b = lemma1_bound(&p, d0 * d0, &vec![e; k + 1], k).unwrap();
            let r: f64 = 1.0 - amu;
            let start = (0.5 * d0 * d0 - eta) - r * e * e / 2.0;
            prop_assert!((b - lim - r.powi(k as i32) * start).abs() <= 1e-9 * (1.0 + lim.abs()));
            prop_assert!((b - lim).abs() <= (-10.0f64).exp() * start.abs() + 1e-9 * (1.0 + lim.abs()));

            let q = BoundParams { alpha: amu, lf: 1.0, mu_f: 1.0, l_phi: 0.0, mu_phi: 0.0, c_const: 2.0, eta0: eta, eta_star: 0.0 };
            let mp = q.mu_prime();
            let k = 10 * (1.0 / (q.alpha * mp)).ceil() as usize;
            let tl = theorem1_limit(&q, e).unwrap();
            let tb = theorem1_bound(&q, d0 * d0, &vec![e; k + 1], k).unwrap();
            let r = 1.0 - q.alpha * mp;
            let start = (0.5 * d0 * d0 - eta) - r * e / (q.c_const * mp);
            prop_assert!((tb - tl - r.powi(k as i32) * start).abs() <= 1e-9 * (1.0 + tl.abs()));
            prop_assert!((tb - tl).abs() <= (-10.0f64).exp() * start.abs() + 1e-9 * (1.0 + tl.abs()));
        }
    }
}
