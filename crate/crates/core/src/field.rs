//! Time-varying quadratic scalar field.
//!
//! `f_k(x) = ½(x − c(k))ᵀQ(x − c(k)) + ζᵀ(x − c(k)) + p`, where the source
//! path `c(k)` is a sum of sinusoids plus a linear drift per coordinate.
//! Agents only ever see [`QuadraticField::value`]; the gradient and the
//! minimiser are ground truth for bounds and tests.

use nalgebra::{Cholesky, DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};

/// One `amplitude · sin(frequency · k + phase)` term of a source path.
#[derive(Clone, Debug, PartialEq)]
pub struct Sinusoid {
    pub amplitude: f64,
    pub frequency: f64,
    pub phase: f64,
}

impl Sinusoid {
    pub fn new(amplitude: f64, frequency: f64) -> Self {
        Self {
            amplitude,
            frequency,
            phase: 0.0,
        }
    }
}

/// Scalar path for one coordinate: `offset + Σ sinusoids + drift · k`.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct PathComponent {
    pub offset: f64,
    pub terms: Vec<Sinusoid>,
    pub drift: f64,
}

impl PathComponent {
    pub fn eval(&self, k: usize) -> f64 {
        let t = k as f64;
        let waves: f64 = self
            .terms
            .iter()
            .map(|s| s.amplitude * (s.frequency * t + s.phase).sin())
            .sum();
        self.offset + waves + self.drift * t
    }

    pub fn is_static(&self) -> bool {
        self.drift == 0.0 && self.terms.iter().all(|s| s.amplitude == 0.0 || s.frequency == 0.0)
    }
}

/// Source trajectory `c(k)`.
///
/// By default the same scalar path drives every coordinate; a per-coordinate
/// list overrides it.
#[derive(Clone, Debug, PartialEq)]
pub enum SourcePath {
    Shared(PathComponent),
    PerCoordinate(Vec<PathComponent>),
}

impl SourcePath {
    pub fn fixed_at_origin() -> Self {
        SourcePath::Shared(PathComponent::default())
    }

    pub fn eval(&self, k: usize, dim: usize) -> DVector<f64> {
        match self {
            SourcePath::Shared(p) => DVector::from_element(dim, p.eval(k)),
            SourcePath::PerCoordinate(ps) => DVector::from_iterator(dim, ps.iter().map(|p| p.eval(k))),
        }
    }

    pub fn is_static(&self) -> bool {
        match self {
            SourcePath::Shared(p) => p.is_static(),
            SourcePath::PerCoordinate(ps) => ps.iter().all(PathComponent::is_static),
        }
    }
}

/// Axis-aligned box used as the operating region for drift constants.
#[derive(Clone, Debug, PartialEq)]
pub struct OperatingBox {
    pub lo: DVector<f64>,
    pub hi: DVector<f64>,
}

impl OperatingBox {
    pub fn new(lo: DVector<f64>, hi: DVector<f64>) -> Result<Self> {
        if lo.len() != hi.len() {
            return Err(Error::DimensionMismatch {
                expected: lo.len(),
                found: hi.len(),
            });
        }
        if lo.iter().zip(hi.iter()).any(|(l, h)| !(l <= h)) {
            return Err(Error::InvalidParameter("operating box has lo > hi".into()));
        }
        Ok(Self { lo, hi })
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn contains(&self, x: &DVector<f64>) -> bool {
        x.len() == self.dim()
            && x.iter()
                .zip(self.lo.iter().zip(self.hi.iter()))
                .all(|(v, (l, h))| *l <= *v && *v <= *h)
    }

    /// All `2^d` corners.
    pub fn corners(&self) -> impl Iterator<Item = DVector<f64>> + '_ {
        let d = self.dim();
        (0..1usize << d).map(move |mask| {
            DVector::from_iterator(
                d,
                (0..d).map(|j| if mask >> j & 1 == 1 { self.hi[j] } else { self.lo[j] }),
            )
        })
    }
}

/// Regularity and drift constants of a field sequence.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FieldConstants {
    /// Lipschitz constant of the gradient.
    pub lf: f64,
    /// PL constant.
    pub mu_f: f64,
    /// Bound on `|f_{k+1}(x) − f_k(x)|` over the operating box.
    pub eta0: f64,
    /// Bound on `|f*_{k+1} − f*_k|`.
    pub eta_star: f64,
}

/// Time-varying convex quadratic field.
#[derive(Clone, Debug)]
pub struct QuadraticField {
    q: DMatrix<f64>,
    zeta: DVector<f64>,
    p: f64,
    path: SourcePath,
    qs: DMatrix<f64>,
    eigenvalues: (f64, f64),
    // Qs⁻¹ζ, the fixed shift from the source to the minimiser.
    shift: DVector<f64>,
}

impl QuadraticField {
    pub fn new(q: DMatrix<f64>, zeta: DVector<f64>, p: f64, path: SourcePath) -> Result<Self> {
        let d = q.nrows();
        if d == 0 {
            return Err(Error::InvalidParameter("field dimension must be at least 1".into()));
        }
        if q.ncols() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                found: q.ncols(),
            });
        }
        if zeta.len() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                found: zeta.len(),
            });
        }
        if let SourcePath::PerCoordinate(ps) = &path {
            if ps.len() != d {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    found: ps.len(),
                });
            }
        }
        let qs = (&q + q.transpose()) * 0.5;
        let eig = SymmetricEigen::new(qs.clone());
        let min = eig.eigenvalues.min();
        let max = eig.eigenvalues.max();
        if !(min > 0.0) {
            return Err(Error::NotPositiveDefinite { min_eigenvalue: min });
        }
        let chol = Cholesky::new(qs.clone()).ok_or(Error::NotPositiveDefinite { min_eigenvalue: min })?;
        let shift = chol.solve(&zeta);
        Ok(Self {
            q,
            zeta,
            p,
            path,
            qs,
            eigenvalues: (min, max),
            shift,
        })
    }

    pub fn dim(&self) -> usize {
        self.zeta.len()
    }

    pub fn q(&self) -> &DMatrix<f64> {
        &self.q
    }

    /// `(Q + Qᵀ)/2`, the Hessian of the field.
    pub fn q_sym(&self) -> &DMatrix<f64> {
        &self.qs
    }

    pub fn zeta(&self) -> &DVector<f64> {
        &self.zeta
    }

    pub fn offset(&self) -> f64 {
        self.p
    }

    pub fn path(&self) -> &SourcePath {
        &self.path
    }

    pub fn is_static(&self) -> bool {
        self.path.is_static()
    }

    /// Source position `c(k)`.
    pub fn source(&self, k: usize) -> DVector<f64> {
        self.path.eval(k, self.dim())
    }

    fn check(&self, x: &DVector<f64>) -> Result<()> {
        if x.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: x.len(),
            });
        }
        Ok(())
    }

    /// `f_k(x)`, evaluated with `Q` exactly as given.
    pub fn value(&self, k: usize, x: &DVector<f64>) -> Result<f64> {
        self.check(x)?;
        Ok(self.value_unchecked(k, x))
    }

    pub(crate) fn value_unchecked(&self, k: usize, x: &DVector<f64>) -> f64 {
        let y = x - self.source(k);
        0.5 * y.dot(&(&self.q * &y)) + self.zeta.dot(&y) + self.p
    }

    /// Analytic gradient `Qs(x − c(k)) + ζ`. Ground truth only.
    pub fn gradient(&self, k: usize, x: &DVector<f64>) -> Result<DVector<f64>> {
        self.check(x)?;
        Ok(self.gradient_unchecked(k, x))
    }

    pub(crate) fn gradient_unchecked(&self, k: usize, x: &DVector<f64>) -> DVector<f64> {
        &self.qs * (x - self.source(k)) + &self.zeta
    }

    /// The unique minimiser `c(k) − Qs⁻¹ζ`.
    pub fn minimizer(&self, k: usize) -> DVector<f64> {
        self.source(k) - &self.shift
    }

    /// `f*_k = p − ½ ζᵀQs⁻¹ζ`; independent of `k` for a translating quadratic.
    pub fn optimal_value(&self, _k: usize) -> f64 {
        self.p - 0.5 * self.zeta.dot(&self.shift)
    }

    /// `(μ_f, L_f)`: smallest and largest eigenvalue of `Qs`.
    pub fn eigen_bounds(&self) -> (f64, f64) {
        self.eigenvalues
    }

    pub fn lipschitz(&self) -> f64 {
        self.eigenvalues.1
    }

    pub fn pl_constant(&self) -> f64 {
        self.eigenvalues.0
    }

    /// Regularity constants plus drift bounds over `region` for `k < horizon`.
    ///
    /// `f_{k+1} − f_k` is affine in `x`, so its extreme absolute value over the
    /// box is attained at a corner.
    pub fn constants(&self, region: &OperatingBox, horizon: usize) -> Result<FieldConstants> {
        if region.dim() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: region.dim(),
            });
        }
        if horizon == 0 {
            return Err(Error::InvalidParameter("horizon must be at least 1".into()));
        }
        let corners: Vec<_> = region.corners().collect();
        let mut eta0 = 0.0_f64;
        let mut eta_star = 0.0_f64;
        if !self.is_static() {
            for k in 0..horizon {
                for x in &corners {
                    let diff = self.value_unchecked(k + 1, x) - self.value_unchecked(k, x);
                    eta0 = eta0.max(diff.abs());
                }
                eta_star = eta_star.max((self.optimal_value(k + 1) - self.optimal_value(k)).abs());
            }
        }
        Ok(FieldConstants {
            lf: self.lipschitz(),
            mu_f: self.pl_constant(),
            eta0,
            eta_star,
        })
    }
}

impl PartialEq for QuadraticField {
    fn eq(&self, other: &Self) -> bool {
        self.q == other.q && self.zeta == other.zeta && self.p == other.p && self.path == other.path
    }
}

/// The source path used in the reference experiments:
/// `c(k) = 10 sin(√2 k/100) + 10 sin(√3 k/100) + k/100` on every coordinate.
pub fn reference_path() -> SourcePath {
    SourcePath::Shared(PathComponent {
        offset: 0.0,
        terms: vec![
            Sinusoid::new(10.0, 2f64.sqrt() / 100.0),
            Sinusoid::new(10.0, 3f64.sqrt() / 100.0),
        ],
        drift: 0.01,
    })
}

/// The reference 2-D quadratic with the given path.
pub fn reference_field(path: SourcePath) -> QuadraticField {
    QuadraticField::new(
        DMatrix::from_row_slice(2, 2, &[2.66, -0.36, -0.35, 1.74]),
        DVector::from_vec(vec![-1.28, 4.66]),
        6.26,
        path,
    )
    .expect("reference field is positive definite")
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn scalar_field(q: f64, zeta: f64, source: f64) -> QuadraticField {
        QuadraticField::new(
            DMatrix::from_element(1, 1, q),
            DVector::from_element(1, zeta),
            0.0,
            SourcePath::Shared(PathComponent {
                offset: source,
                ..Default::default()
            }),
        )
        .unwrap()
    }

    fn v(xs: &[f64]) -> DVector<f64> {
        DVector::from_row_slice(xs)
    }

    #[test]
    fn value_at_source_is_offset() {
        let f = reference_field(reference_path());
        for k in [0, 17, 1234] {
            let c = f.source(k);
            assert_relative_eq!(f.value(k, &c).unwrap(), 6.26, epsilon = 1e-12);
        }
    }

    #[test]
    fn scalar_examples() {
        let f = scalar_field(2.0, 0.0, 0.0);
        assert_eq!(f.value(0, &v(&[3.0])).unwrap(), 9.0);
        let f = scalar_field(2.0, 1.0, 0.0);
        assert_eq!(f.gradient(0, &v(&[1.0])).unwrap()[0], 3.0);
        let f = scalar_field(2.0, 4.0, 5.0);
        assert_eq!(f.minimizer(3)[0], 3.0);
    }

    #[test]
    fn gradient_at_source_is_zeta() {
        let f = reference_field(reference_path());
        let g = f.gradient(42, &f.source(42)).unwrap();
        assert_relative_eq!(g[0], -1.28, epsilon = 1e-12);
        assert_relative_eq!(g[1], 4.66, epsilon = 1e-12);
    }

    #[test]
    fn dimension_mismatch_is_rejected() {
        let f = reference_field(reference_path());
        assert!(matches!(
            f.value(0, &v(&[1.0, 2.0, 3.0])),
            Err(Error::DimensionMismatch { expected: 2, found: 3 })
        ));
        assert!(f.gradient(0, &v(&[1.0])).is_err());
    }

    #[test]
    fn rejects_indefinite_matrix() {
        let r = QuadraticField::new(
            DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]),
            DVector::zeros(2),
            0.0,
            SourcePath::fixed_at_origin(),
        );
        assert!(matches!(r, Err(Error::NotPositiveDefinite { .. })));
    }

    #[test]
    fn reference_eigenvalues() {
        // closed form for the symmetric 2x2 [[2.66, -0.355], [-0.355, 1.74]]
        let (a, b, c) = (2.66_f64, -0.355_f64, 1.74_f64);
        let mean = 0.5 * (a + c);
        let rad = (0.25 * (a - c).powi(2) + b * b).sqrt();
        let f = reference_field(reference_path());
        let (mu, lf) = f.eigen_bounds();
        assert_relative_eq!(mu, mean - rad, epsilon = 1e-12);
        assert_relative_eq!(lf, mean + rad, epsilon = 1e-12);
        assert_relative_eq!(mu, 1.618_944_925_157_7, epsilon = 1e-10);
        assert_relative_eq!(lf, 2.781_055_074_842_3, epsilon = 1e-10);
    }

    #[test]
    fn reference_minimizer_at_k0() {
        // Cramer's rule on Qs m = −ζ.
        let (a, b, c) = (2.66_f64, -0.355_f64, 1.74_f64);
        let det = a * c - b * b;
        let (z0, z1) = (-1.28_f64, 4.66_f64);
        let m0 = -(c * z0 - b * z1) / det;
        let m1 = -(a * z1 - b * z0) / det;
        let f = reference_field(reference_path());
        let m = f.minimizer(0);
        assert_relative_eq!(m[0], m0, epsilon = 1e-12);
        assert_relative_eq!(m[1], m1, epsilon = 1e-12);
        assert_relative_eq!(m[0], 0.127_243_95, epsilon = 1e-7);
        assert_relative_eq!(m[1], -2.652_200_23, epsilon = 1e-7);
        assert_relative_eq!(f.optimal_value(0), f.value(0, &m).unwrap(), epsilon = 1e-12);
    }

    #[test]
    fn drift_constants() {
        let region = OperatingBox::new(v(&[-5.0, -5.0]), v(&[5.0, 5.0])).unwrap();
        let moving = reference_field(reference_path());
        let c = moving.constants(&region, 50).unwrap();
        assert_eq!(c.eta_star, 0.0);
        assert!(c.eta0 > 0.0);
        let (mu, lf) = moving.eigen_bounds();
        assert_eq!((c.mu_f, c.lf), (mu, lf));

        let still = reference_field(SourcePath::fixed_at_origin());
        let c = still.constants(&region, 50).unwrap();
        assert_eq!((c.eta0, c.eta_star), (0.0, 0.0));
    }

    #[test]
    fn eta0_dominates_interior_drift() {
        let region = OperatingBox::new(v(&[-10.0, -3.0]), v(&[8.0, 12.0])).unwrap();
        let f = reference_field(reference_path());
        let c = f.constants(&region, 40).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..2000 {
            let k = rng.random_range(0..40);
            let x = v(&[rng.random_range(-10.0..8.0), rng.random_range(-3.0..12.0)]);
            let diff = f.value(k + 1, &x).unwrap() - f.value(k, &x).unwrap();
            assert!(diff.abs() <= c.eta0 + 1e-12);
        }
    }

    fn random_field(rng: &mut ChaCha8Rng) -> QuadraticField {
        let d = rng.random_range(1..=4);
        let m = DMatrix::from_fn(d, d, |_, _| rng.random_range(-1.0..1.0));
        let q = &m * m.transpose()
            + DMatrix::identity(d, d) * 0.1
            + DMatrix::from_fn(d, d, |_, _| rng.random_range(-0.05..0.05));
        let zeta = DVector::from_fn(d, |_, _| rng.random_range(-3.0..3.0));
        QuadraticField::new(q, zeta, rng.random_range(-2.0..2.0), reference_path()).unwrap()
    }

    #[test]
    fn pl_descent_lemma_and_squeeze() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..1000 {
            let f = random_field(&mut rng);
            let d = f.dim();
            let k = rng.random_range(0..500);
            let x = DVector::from_fn(d, |_, _| rng.random_range(-20.0..20.0));
            let y = DVector::from_fn(d, |_, _| rng.random_range(-20.0..20.0));
            let (mu, lf) = f.eigen_bounds();
            let fx = f.value(k, &x).unwrap();
            let fstar = f.optimal_value(k);
            let g = f.gradient(k, &x).unwrap();
            assert!(0.5 * g.norm_squared() >= mu * (fx - fstar) - 1e-9);
            let fy = f.value(k, &y).unwrap();
            assert!(fy <= fx + g.dot(&(&y - &x)) + 0.5 * lf * (&y - &x).norm_squared() + 1e-9);
            let dist2 = (&x - f.minimizer(k)).norm_squared();
            let gap = fx - fstar;
            assert!(0.5 * mu * dist2 <= gap + 1e-9 * (1.0 + gap.abs()));
            assert!(gap <= 0.5 * lf * dist2 + 1e-9 * (1.0 + gap.abs()));
        }
    }

    #[test]
    fn gradient_matches_central_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..100 {
            let f = random_field(&mut rng);
            let d = f.dim();
            let k = rng.random_range(0..300);
            let x = DVector::from_fn(d, |_, _| rng.random_range(-10.0..10.0));
            let g = f.gradient(k, &x).unwrap();
            let h = 1e-5;
            let fd = DVector::from_fn(d, |j, _| {
                let mut xp = x.clone();
                let mut xm = x.clone();
                xp[j] += h;
                xm[j] -= h;
                (f.value(k, &xp).unwrap() - f.value(k, &xm).unwrap()) / (2.0 * h)
            });
            assert!((&g - &fd).norm() <= 1e-6 * g.norm().max(1.0));
        }
    }

    #[test]
    fn path_is_deterministic() {
        let p = reference_path();
        assert_eq!(p.eval(1000, 2), p.eval(1000, 2));
        let expected = 10.0 * (2f64.sqrt() * 10.0).sin() + 10.0 * (3f64.sqrt() * 10.0).sin() + 10.0;
        assert_relative_eq!(p.eval(1000, 2)[1], expected, epsilon = 1e-12);
    }
}
