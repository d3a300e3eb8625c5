//! Simplex-gradient estimation with certified error bounds.
//!
//! An agent at `x_i` with neighbours `x_j` knows only the sampled values. For
//! an `L_f`-smooth field each neighbour pins the directional derivative along
//! `v_ij` to an interval of half-width `a_ij = L_f‖x_j − x_i‖/2` around the
//! difference quotient `s_ij`. The intersection of those slabs is a polytope
//! holding the true gradient; two ellipsoids and a scalar radius bound it.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, Exp1, StandardNormal};

use crate::error::{Error, Result};

/// Singular values below this fraction of the largest are treated as zero.
pub const RANK_TOLERANCE: f64 = 1e-12;

/// Absolute slack for containment tests on unit-scale problems.
pub const CONTAINMENT_TOLERANCE: f64 = 1e-9;

/// Largest dimension accepted by the parallelotope vertex enumeration.
pub const MAX_ENUMERATION_DIM: usize = 16;

/// One agent's own sample plus its neighbours' samples.
#[derive(Clone, Debug)]
pub struct LocalSamples {
    pub position: DVector<f64>,
    pub value: f64,
    pub neighbours: Vec<(DVector<f64>, f64)>,
    pub lipschitz: f64,
}

/// Per-neighbour difference quotients `s`, unit directions `V` (rows) and
/// interval half-widths `a`.
#[derive(Clone, Debug, PartialEq)]
pub struct EdgeQuantities {
    pub slopes: DVector<f64>,
    pub directions: DMatrix<f64>,
    pub half_widths: DVector<f64>,
}

impl EdgeQuantities {
    pub fn new(samples: &LocalSamples) -> Result<Self> {
        let d = samples.position.len();
        let m = samples.neighbours.len();
        if m == 0 {
            return Err(Error::InvalidParameter("agent has no neighbours".into()));
        }
        let mut slopes = DVector::zeros(m);
        let mut directions = DMatrix::zeros(m, d);
        let mut half_widths = DVector::zeros(m);
        for (j, (xj, fj)) in samples.neighbours.iter().enumerate() {
            if xj.len() != d {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    found: xj.len(),
                });
            }
            let delta = xj - &samples.position;
            let dist = delta.norm();
            if !(dist > 0.0) {
                return Err(Error::CoincidentSamples { neighbour: j });
            }
            slopes[j] = (fj - samples.value) / dist;
            directions.set_row(j, &(delta / dist).transpose());
            half_widths[j] = 0.5 * samples.lipschitz * dist;
        }
        Ok(Self {
            slopes,
            directions,
            half_widths,
        })
    }

    pub fn count(&self) -> usize {
        self.directions.nrows()
    }

    pub fn dim(&self) -> usize {
        self.directions.ncols()
    }

    /// Singular values of `V`, largest first.
    pub fn singular_values(&self) -> Vec<f64> {
        singular_values(&self.directions)
    }

    pub fn rank(&self) -> usize {
        numerical_rank(&self.singular_values())
    }

    pub fn is_full_rank(&self) -> bool {
        self.rank() == self.dim()
    }

    /// `(σ_min, σ_max)` over the `min(m, d)` singular values.
    pub fn sigma_bounds(&self) -> (f64, f64) {
        let sv = self.singular_values();
        (*sv.last().unwrap_or(&0.0), *sv.first().unwrap_or(&0.0))
    }

    /// `|s_j − gᵀv_j| + a_j` for each neighbour.
    pub fn scaled_widths(&self, g: &DVector<f64>) -> DVector<f64> {
        let residual = &self.slopes - &self.directions * g;
        residual.map(f64::abs) + &self.half_widths
    }

    fn require_full_rank(&self) -> Result<()> {
        let rank = self.rank();
        if rank < self.dim() {
            return Err(Error::RankDeficient { rank, dim: self.dim() });
        }
        Ok(())
    }
}

fn singular_values(m: &DMatrix<f64>) -> Vec<f64> {
    let mut sv: Vec<f64> = m.clone().svd(false, false).singular_values.iter().copied().collect();
    sv.sort_by(|a, b| b.total_cmp(a));
    sv
}

fn numerical_rank(sorted_desc: &[f64]) -> usize {
    match sorted_desc.first() {
        Some(&max) if max > 0.0 => sorted_desc.iter().filter(|&&s| s > RANK_TOLERANCE * max).count(),
        _ => 0,
    }
}

/// Moore–Penrose least-squares solve of `A x ≈ b` with a relative rank cut.
pub fn pinv_solve(a: &DMatrix<f64>, b: &DVector<f64>) -> DVector<f64> {
    let svd = a.clone().svd(true, true);
    let u = svd.u.as_ref().expect("u requested");
    let vt = svd.v_t.as_ref().expect("v_t requested");
    let max = svd.singular_values.max();
    let mut x = DVector::zeros(a.ncols());
    for (k, &s) in svd.singular_values.iter().enumerate() {
        if max > 0.0 && s > RANK_TOLERANCE * max {
            let coeff = u.column(k).dot(b) / s;
            x += vt.row(k).transpose() * coeff;
        }
    }
    x
}

/// Simplex gradient `(VᵀV)†Vᵀs`.
pub fn simplex_gradient(eq: &EdgeQuantities) -> DVector<f64> {
    pinv_solve(&eq.directions, &eq.slopes)
}

/// `{x : Vx ≤ s + a, −Vx ≤ a − s}`.
#[derive(Clone, Debug, PartialEq)]
pub struct GradientPolytope {
    pub normals: DMatrix<f64>,
    /// `s + a` stacked over `a − s`.
    pub bounds: DVector<f64>,
}

impl GradientPolytope {
    pub fn new(eq: &EdgeQuantities) -> Self {
        let m = eq.count();
        let mut bounds = DVector::zeros(2 * m);
        for j in 0..m {
            bounds[j] = eq.slopes[j] + eq.half_widths[j];
            bounds[m + j] = eq.half_widths[j] - eq.slopes[j];
        }
        Self {
            normals: eq.directions.clone(),
            bounds,
        }
    }

    pub fn count(&self) -> usize {
        self.normals.nrows()
    }

    pub fn dim(&self) -> usize {
        self.normals.ncols()
    }

    pub fn is_bounded(&self) -> bool {
        numerical_rank(&singular_values(&self.normals)) == self.dim()
    }

    /// Row `r` of the stacked `[V; −V]` constraint matrix.
    fn constraint_row(&self, r: usize) -> DVector<f64> {
        let m = self.count();
        if r < m {
            self.normals.row(r).transpose()
        } else {
            -self.normals.row(r - m).transpose()
        }
    }

    /// `min_r (b_r − (row_r)ᵀx)`; non-negative iff `x` is inside.
    pub fn min_slack(&self, x: &DVector<f64>) -> f64 {
        let vx = &self.normals * x;
        let m = self.count();
        (0..m)
            .flat_map(|j| [self.bounds[j] - vx[j], self.bounds[m + j] + vx[j]])
            .fold(f64::INFINITY, f64::min)
    }

    fn scale(&self) -> f64 {
        self.bounds.amax().max(1.0)
    }

    pub fn contains(&self, x: &DVector<f64>) -> bool {
        self.min_slack(x) >= -CONTAINMENT_TOLERANCE * self.scale()
    }

    /// Every vertex, by brute force over `d`-subsets of the `2m` constraints.
    ///
    /// Returns an empty list for unbounded or empty polytopes.
    pub fn vertices(&self) -> Vec<DVector<f64>> {
        let d = self.dim();
        let m = self.count();
        if !self.is_bounded() {
            return Vec::new();
        }
        let tol = 1e-9 * self.scale();
        let mut out: Vec<DVector<f64>> = Vec::new();
        for combo in Combinations::new(2 * m, d) {
            // opposite faces of one slab are parallel
            let mut rows_used = vec![false; m];
            if combo.iter().any(|&r| std::mem::replace(&mut rows_used[r % m], true)) {
                continue;
            }
            let mut sys = DMatrix::zeros(d, d);
            let mut rhs = DVector::zeros(d);
            for (row, &r) in combo.iter().enumerate() {
                sys.set_row(row, &self.constraint_row(r).transpose());
                rhs[row] = self.bounds[r];
            }
            let sv = singular_values(&sys);
            if numerical_rank(&sv) < d {
                continue;
            }
            let Some(x) = sys.lu().solve(&rhs) else { continue };
            if self.min_slack(&x) < -tol {
                continue;
            }
            if out.iter().all(|y| (y - &x).norm() > tol) {
                out.push(x);
            }
        }
        out
    }

    /// Exact maximiser of `directionᵀx` over the polytope (an LP over its
    /// vertex set).
    pub fn maximize(&self, direction: &DVector<f64>, vertices: &[DVector<f64>]) -> Option<DVector<f64>> {
        vertices
            .iter()
            .max_by(|a, b| direction.dot(a).total_cmp(&direction.dot(b)))
            .cloned()
    }

    /// Feasible points from LPs in random objective directions, mixed into
    /// random convex combinations so the interior is covered too.
    pub fn sample_points<R: Rng + ?Sized>(&self, count: usize, rng: &mut R) -> Vec<DVector<f64>> {
        let vertices = self.vertices();
        if vertices.is_empty() {
            return Vec::new();
        }
        let d = self.dim();
        let mut out = Vec::with_capacity(count);
        while out.len() < count {
            let picks = 1 + out.len() % (d + 2);
            let mut weights = Vec::with_capacity(picks);
            let mut points = Vec::with_capacity(picks);
            for _ in 0..picks {
                let dir = DVector::from_fn(d, |_, _| StandardNormal.sample(rng));
                points.push(self.maximize(&dir, &vertices).expect("non-empty vertex set"));
                let w: f64 = Exp1.sample(rng);
                weights.push(w);
            }
            let total: f64 = weights.iter().sum();
            let mut x = DVector::zeros(d);
            for (p, w) in points.iter().zip(&weights) {
                x += p * (w / total);
            }
            out.push(x);
        }
        out
    }
}

/// `{x : ‖S(x − c)‖² ≤ 1}`.
#[derive(Clone, Debug, PartialEq)]
pub struct Ellipsoid {
    pub center: DVector<f64>,
    pub shape: DMatrix<f64>,
}

impl Ellipsoid {
    pub fn quad_form(&self, x: &DVector<f64>) -> f64 {
        (&self.shape * (x - &self.center)).norm_squared()
    }

    pub fn contains(&self, x: &DVector<f64>) -> bool {
        self.quad_form(x) <= 1.0 + CONTAINMENT_TOLERANCE
    }

    /// Semi-axis lengths, longest first (`1/σ` of the shape matrix).
    pub fn semi_axes(&self) -> Vec<f64> {
        let mut axes: Vec<f64> = singular_values(&self.shape).iter().map(|s| 1.0 / s).collect();
        axes.sort_by(|a, b| b.total_cmp(a));
        axes
    }

    pub fn max_radius(&self) -> f64 {
        self.semi_axes()[0]
    }

    pub fn volume(&self) -> f64 {
        let d = self.center.len();
        let unit_ball = std::f64::consts::PI.powf(d as f64 / 2.0) / gamma_half_integer(d + 2);
        unit_ball * self.semi_axes().iter().product::<f64>()
    }
}

// Γ(n/2) for positive integer n.
fn gamma_half_integer(n: usize) -> f64 {
    let mut g = if n.is_multiple_of(2) {
        1.0
    } else {
        std::f64::consts::PI.sqrt()
    };
    let mut k = if n.is_multiple_of(2) { 2 } else { 1 };
    while k < n {
        g *= k as f64 / 2.0;
        k += 2;
    }
    g
}

/// `m = ‖(|s − Vg| + a)‖`, the uniform scaling factor.
pub fn uniform_scale(eq: &EdgeQuantities, g: &DVector<f64>) -> f64 {
    eq.scaled_widths(g).norm()
}

/// Uniform-scaling ellipse `{x : ‖V(x − g)/m‖² ≤ 1}`.
pub fn uniform_scaling_ellipse(eq: &EdgeQuantities, g: &DVector<f64>) -> Result<Ellipsoid> {
    eq.require_full_rank()?;
    let m = uniform_scale(eq, g);
    Ok(Ellipsoid {
        center: g.clone(),
        shape: &eq.directions / m,
    })
}

/// Row-scaling ellipse: row `j` of the shape is `v_jᵀ / (√|N| (|s_j − gᵀv_j| + a_j))`.
pub fn row_scaling_ellipse(eq: &EdgeQuantities, g: &DVector<f64>) -> Result<Ellipsoid> {
    eq.require_full_rank()?;
    let widths = eq.scaled_widths(g);
    let root_m = (eq.count() as f64).sqrt();
    let mut shape = eq.directions.clone();
    for (j, w) in widths.iter().enumerate() {
        shape.row_mut(j).scale_mut(1.0 / (root_m * w));
    }
    Ok(Ellipsoid {
        center: g.clone(),
        shape,
    })
}

/// `m / σ_min(V)`: guaranteed bound on `‖g − ∇f(x_i)‖`.
pub fn error_bound(eq: &EdgeQuantities, g: &DVector<f64>) -> Result<f64> {
    eq.require_full_rank()?;
    let (sigma_min, _) = eq.sigma_bounds();
    Ok(uniform_scale(eq, g) / sigma_min)
}

/// Exact smallest enclosing ball of a parallelotope (`m = d`).
///
/// The body is centrally symmetric about `V⁻¹s`, so the ball is centred
/// there with radius `max_σ ‖V⁻¹ diag(σ) a‖` over all sign vectors.
pub fn smallest_ball_oracle(poly: &GradientPolytope) -> Result<(DVector<f64>, f64)> {
    let d = poly.dim();
    let m = poly.count();
    if m != d {
        return Err(Error::Unsupported(format!(
            "smallest-ball enumeration needs exactly d = {d} neighbours, got {m}"
        )));
    }
    if d > MAX_ENUMERATION_DIM {
        return Err(Error::Unsupported(format!(
            "vertex enumeration beyond d = {MAX_ENUMERATION_DIM}"
        )));
    }
    let rank = numerical_rank(&singular_values(&poly.normals));
    if rank < d {
        return Err(Error::RankDeficient { rank, dim: d });
    }
    let slopes = DVector::from_fn(m, |j, _| 0.5 * (poly.bounds[j] - poly.bounds[m + j]));
    let widths = DVector::from_fn(m, |j, _| 0.5 * (poly.bounds[j] + poly.bounds[m + j]));
    let lu = poly.normals.clone().lu();
    let center = lu.solve(&slopes).ok_or(Error::RankDeficient { rank, dim: d })?;
    let inverse = lu.try_inverse().ok_or(Error::RankDeficient { rank, dim: d })?;
    let radius = (0..1usize << d)
        .map(|mask| {
            let signed = DVector::from_fn(d, |j, _| if mask >> j & 1 == 1 { -widths[j] } else { widths[j] });
            (&inverse * signed).norm()
        })
        .fold(0.0, f64::max);
    Ok((center, radius))
}

/// Gradient estimate of one agent with its ellipsoidal certificates.
///
/// With rank-deficient neighbour geometry the estimate is still formed but
/// no certificate exists, so the optional fields are `None`.
#[derive(Clone, Debug)]
pub struct GradientEstimate {
    pub gradient: DVector<f64>,
    pub m_scale: f64,
    pub uniform: Option<Ellipsoid>,
    pub row: Option<Ellipsoid>,
    pub error_bound: Option<f64>,
    pub rank: usize,
}

impl GradientEstimate {
    pub fn is_certified(&self) -> bool {
        self.error_bound.is_some()
    }
}

pub fn estimate(samples: &LocalSamples) -> Result<GradientEstimate> {
    let eq = EdgeQuantities::new(samples)?;
    Ok(estimate_from_edges(&eq))
}

pub fn estimate_from_edges(eq: &EdgeQuantities) -> GradientEstimate {
    let g = simplex_gradient(eq);
    let m_scale = uniform_scale(eq, &g);
    let rank = eq.rank();
    if rank < eq.dim() {
        return GradientEstimate {
            gradient: g,
            m_scale,
            uniform: None,
            row: None,
            error_bound: None,
            rank,
        };
    }
    GradientEstimate {
        uniform: uniform_scaling_ellipse(eq, &g).ok(),
        row: row_scaling_ellipse(eq, &g).ok(),
        error_bound: error_bound(eq, &g).ok(),
        gradient: g,
        m_scale,
        rank,
    }
}

/// Field-independent worst case of the error bound for a fixed geometry.
///
/// The residual `s − Vg` equals `(I − VV†)e` for some `|e_j| ≤ a_j`, and the
/// bound is convex in `e`, so the supremum sits at a corner of that box.
/// With `m = d` the residual vanishes and this is `‖a‖/σ_min`.
pub fn worst_case_error_bound(position: &DVector<f64>, neighbours: &[DVector<f64>], lipschitz: f64) -> Result<f64> {
    let samples = LocalSamples {
        position: position.clone(),
        value: 0.0,
        neighbours: neighbours.iter().map(|x| (x.clone(), 0.0)).collect(),
        lipschitz,
    };
    let eq = EdgeQuantities::new(&samples)?;
    eq.require_full_rank()?;
    let m = eq.count();
    let (sigma_min, _) = eq.sigma_bounds();
    let a = &eq.half_widths;
    if m == eq.dim() {
        return Ok(a.norm() / sigma_min);
    }
    if m > 24 {
        return Err(Error::Unsupported(format!(
            "worst-case enumeration over {m} neighbours"
        )));
    }
    let v = &eq.directions;
    let projector = DMatrix::identity(m, m) - v * pinv_matrix(v);
    let worst = (0..1usize << m)
        .map(|mask| {
            let e = DVector::from_fn(m, |j, _| if mask >> j & 1 == 1 { -a[j] } else { a[j] });
            ((&projector * e).map(f64::abs) + a).norm()
        })
        .fold(0.0, f64::max);
    Ok(worst / sigma_min)
}

fn pinv_matrix(a: &DMatrix<f64>) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(a.ncols(), a.nrows());
    for r in 0..a.nrows() {
        let mut e = DVector::zeros(a.nrows());
        e[r] = 1.0;
        out.set_column(r, &pinv_solve(a, &e));
    }
    out
}

/// Lexicographic `k`-subsets of `0..n`.
struct Combinations {
    n: usize,
    idx: Vec<usize>,
    done: bool,
}

impl Combinations {
    fn new(n: usize, k: usize) -> Self {
        Self {
            n,
            idx: (0..k).collect(),
            done: k > n,
        }
    }
}

impl Iterator for Combinations {
    type Item = Vec<usize>;

    fn next(&mut self) -> Option<Vec<usize>> {
        if self.done {
            return None;
        }
        let out = self.idx.clone();
        let k = self.idx.len();
        let mut i = k;
        loop {
            if i == 0 {
                self.done = true;
                break;
            }
            i -= 1;
            if self.idx[i] < self.n - k + i {
                self.idx[i] += 1;
                for j in i + 1..k {
                    self.idx[j] = self.idx[j - 1] + 1;
                }
                break;
            }
        }
        Some(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn v(xs: &[f64]) -> DVector<f64> {
        DVector::from_row_slice(xs)
    }

    fn samples_from<F: Fn(&DVector<f64>) -> f64>(
        f: F,
        x: DVector<f64>,
        nbrs: &[DVector<f64>],
        lf: f64,
    ) -> LocalSamples {
        LocalSamples {
            value: f(&x),
            neighbours: nbrs.iter().map(|y| (y.clone(), f(y))).collect(),
            position: x,
            lipschitz: lf,
        }
    }

    #[test]
    fn edge_quantities_scalar_example() {
        let s = samples_from(|x| x[0] * x[0], v(&[0.0]), &[v(&[2.0])], 2.0);
        let eq = EdgeQuantities::new(&s).unwrap();
        assert_eq!(eq.slopes[0], 2.0);
        assert_eq!(eq.directions[(0, 0)], 1.0);
        assert_eq!(eq.half_widths[0], 2.0);
    }

    #[test]
    fn coincident_and_empty_neighbours_rejected() {
        let s = samples_from(|x| x[0], v(&[1.0, 1.0]), &[v(&[0.0, 1.0]), v(&[1.0, 1.0])], 1.0);
        assert!(matches!(
            EdgeQuantities::new(&s),
            Err(Error::CoincidentSamples { neighbour: 1 })
        ));
        let s = samples_from(|x| x[0], v(&[1.0]), &[], 1.0);
        assert!(EdgeQuantities::new(&s).is_err());
    }

    #[test]
    fn exact_on_linear_fields() {
        let zeta = v(&[0.7, -1.9, 2.5]);
        let f = |x: &DVector<f64>| zeta.dot(x) + 3.0;
        let x = v(&[0.1, 0.2, -0.3]);
        let nbrs = [
            v(&[1.0, 0.5, 0.0]),
            v(&[-0.5, 1.0, 0.3]),
            v(&[0.2, -0.4, 1.1]),
            v(&[0.9, 0.9, 0.9]),
        ];
        let eq = EdgeQuantities::new(&samples_from(f, x, &nbrs, 1.0)).unwrap();
        for j in 0..eq.count() {
            assert_relative_eq!(
                eq.slopes[j],
                eq.directions.row(j).transpose().dot(&zeta),
                epsilon = 1e-12
            );
        }
        let g = simplex_gradient(&eq);
        assert!((&g - &zeta).norm() < 1e-10);
        // zero residuals, so the scale is exactly ‖a‖
        assert_relative_eq!(uniform_scale(&eq, &g), eq.half_widths.norm(), epsilon = 1e-10);
        let poly = GradientPolytope::new(&eq);
        let m = eq.count();
        for j in 0..m {
            assert_relative_eq!(
                0.5 * (poly.bounds[j] + poly.bounds[m + j]),
                eq.half_widths[j],
                epsilon = 1e-12
            );
        }
    }

    #[test]
    fn orthonormal_square_case() {
        let f = |x: &DVector<f64>| x[0] * x[0] + x[1] * x[1];
        let eq = EdgeQuantities::new(&samples_from(f, v(&[0.0, 0.0]), &[v(&[1.0, 0.0]), v(&[0.0, 1.0])], 2.0)).unwrap();
        let g = simplex_gradient(&eq);
        assert_relative_eq!(g, v(&[1.0, 1.0]), epsilon = 1e-12);
        assert_relative_eq!(g, eq.directions.transpose() * &eq.slopes, epsilon = 1e-12);
        // true gradient is 0; error √2 equals the bound L_f·r·√d/2 = √2
        let bound = error_bound(&eq, &g).unwrap();
        assert_relative_eq!(bound, 2f64.sqrt(), epsilon = 1e-12);
        assert!(g.norm() <= bound + 1e-12);
        let e = uniform_scaling_ellipse(&eq, &g).unwrap();
        assert_relative_eq!(e.max_radius(), 2f64.sqrt(), epsilon = 1e-12);
        let row = row_scaling_ellipse(&eq, &g).unwrap();
        for axis in row.semi_axes() {
            assert_relative_eq!(axis, 2f64.sqrt(), epsilon = 1e-12);
        }
    }

    #[test]
    fn rank_deficient_geometry() {
        let f = |x: &DVector<f64>| x[0] + 2.0 * x[1];
        let eq = EdgeQuantities::new(&samples_from(
            f,
            v(&[0.0, 0.0]),
            &[v(&[1.0, 1.0]), v(&[-2.0, -2.0])],
            1.0,
        ))
        .unwrap();
        assert_eq!(eq.rank(), 1);
        assert!(!GradientPolytope::new(&eq).is_bounded());
        let g = simplex_gradient(&eq);
        assert!(matches!(
            error_bound(&eq, &g),
            Err(Error::RankDeficient { rank: 1, dim: 2 })
        ));
        assert!(uniform_scaling_ellipse(&eq, &g).is_err());
        let est = estimate_from_edges(&eq);
        assert!(!est.is_certified());
        // min-norm solution: projection of (1, 2) onto (1, 1)/√2
        assert_relative_eq!(est.gradient, v(&[1.5, 1.5]), epsilon = 1e-12);
    }

    #[test]
    fn collinear_worst_case_rejected() {
        let r = worst_case_error_bound(&v(&[0.0, 0.0]), &[v(&[1.0, 0.0]), v(&[-1.0, 0.0])], 1.0);
        assert!(matches!(r, Err(Error::RankDeficient { .. })));
    }

    #[test]
    fn worst_case_bound_square_example() {
        let b = worst_case_error_bound(&v(&[0.0, 0.0]), &[v(&[1.0, 0.0]), v(&[0.0, 1.0])], 2.0).unwrap();
        assert_relative_eq!(b, 2f64.sqrt(), epsilon = 1e-12);
        let scaled = worst_case_error_bound(&v(&[0.0, 0.0]), &[v(&[3.0, 0.0]), v(&[0.0, 3.0])], 2.0).unwrap();
        assert_relative_eq!(scaled, 3.0 * b, epsilon = 1e-12);
    }

    #[test]
    fn worst_case_bound_dominates_random_quadratics() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let x = v(&[0.0, 0.0]);
        let nbrs = [v(&[1.0, 0.0]), v(&[-1.0, 0.0]), v(&[0.0, 1.0])];
        let lf = 2.0;
        let worst = worst_case_error_bound(&x, &nbrs, lf).unwrap();
        for _ in 0..500 {
            let a: f64 = rng.random_range(-1.0..1.0);
            let b: f64 = rng.random_range(-1.0..1.0);
            let c: f64 = rng.random_range(-1.0..1.0);
            // eigenvalues of [[a, c],[c, b]] scaled into [-lf, lf]
            let scale = lf / (a.abs().max(b.abs()) + c.abs()).max(1e-9);
            let (a, b, c) = (a * scale, b * scale, c * scale);
            let (p, q) = (rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0));
            let f = |y: &DVector<f64>| {
                0.5 * (a * y[0] * y[0] + 2.0 * c * y[0] * y[1] + b * y[1] * y[1]) + p * y[0] + q * y[1]
            };
            let eq = EdgeQuantities::new(&samples_from(f, x.clone(), &nbrs, lf)).unwrap();
            let g = simplex_gradient(&eq);
            assert!(error_bound(&eq, &g).unwrap() <= worst + 1e-12);
        }
    }

    #[test]
    fn vertices_of_box_polytope() {
        let f = |x: &DVector<f64>| x[0] + x[1];
        let eq = EdgeQuantities::new(&samples_from(f, v(&[0.0, 0.0]), &[v(&[1.0, 0.0]), v(&[0.0, 1.0])], 2.0)).unwrap();
        let poly = GradientPolytope::new(&eq);
        let mut verts = poly.vertices();
        verts.sort_by(|a, b| a[0].total_cmp(&b[0]).then(a[1].total_cmp(&b[1])));
        assert_eq!(verts.len(), 4);
        assert_relative_eq!(verts[0], v(&[0.0, 0.0]), epsilon = 1e-12);
        assert_relative_eq!(verts[3], v(&[2.0, 2.0]), epsilon = 1e-12);
        let (c, r) = smallest_ball_oracle(&poly).unwrap();
        assert_relative_eq!(c, v(&[1.0, 1.0]), epsilon = 1e-12);
        assert_relative_eq!(r, 2f64.sqrt(), epsilon = 1e-12);
    }

    #[test]
    fn smallest_ball_needs_square_system() {
        let f = |x: &DVector<f64>| x[0];
        let eq = EdgeQuantities::new(&samples_from(
            f,
            v(&[0.0, 0.0]),
            &[v(&[1.0, 0.0]), v(&[0.0, 1.0]), v(&[1.0, 1.0])],
            1.0,
        ))
        .unwrap();
        assert!(matches!(
            smallest_ball_oracle(&GradientPolytope::new(&eq)),
            Err(Error::Unsupported(_))
        ));
    }

    #[test]
    fn containment_helpers() {
        let f = |x: &DVector<f64>| 0.3 * x[0] * x[0] - x[1];
        let eq = EdgeQuantities::new(&samples_from(
            f,
            v(&[0.2, 0.1]),
            &[v(&[1.0, 0.3]), v(&[-0.1, 1.2]), v(&[-0.8, -0.4])],
            1.0,
        ))
        .unwrap();
        let g = simplex_gradient(&eq);
        let poly = GradientPolytope::new(&eq);
        let bound = error_bound(&eq, &g).unwrap();
        for e in [
            uniform_scaling_ellipse(&eq, &g).unwrap(),
            row_scaling_ellipse(&eq, &g).unwrap(),
        ] {
            assert!(e.contains(&g));
            let far = &g + v(&[10.0 * bound, 0.0]);
            assert!(!e.contains(&far));
            assert!(!poly.contains(&far));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for p in poly.sample_points(200, &mut rng) {
            assert!(poly.contains(&p));
        }
    }

    #[test]
    fn gamma_values() {
        assert_relative_eq!(gamma_half_integer(2), 1.0);
        assert_relative_eq!(gamma_half_integer(4), 1.0);
        assert_relative_eq!(
            gamma_half_integer(3),
            0.5 * std::f64::consts::PI.sqrt(),
            epsilon = 1e-15
        );
        assert_relative_eq!(
            gamma_half_integer(5),
            0.75 * std::f64::consts::PI.sqrt(),
            epsilon = 1e-15
        );
        let unit = Ellipsoid {
            center: DVector::zeros(3),
            shape: DMatrix::identity(3, 3),
        };
        assert_relative_eq!(unit.volume(), 4.0 / 3.0 * std::f64::consts::PI, epsilon = 1e-12);
    }

    #[test]
    fn combinations_count() {
        assert_eq!(Combinations::new(6, 2).count(), 15);
        assert_eq!(Combinations::new(12, 3).count(), 220);
        assert_eq!(Combinations::new(2, 3).count(), 0);
    }
}
