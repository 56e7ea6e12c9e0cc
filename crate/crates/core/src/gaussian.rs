//! Dense Gaussian-density primitives: factorization, PSD repair,
//! marginalization, moment matching and KL divergence.
//!
//! These are the workhorse operations shared by the linearization,
//! map and filter modules. Dimensions stay small (a handful of 3-dim
//! landmarks stacked on a 5-dim platform state), so everything is dense.

use nalgebra::{Cholesky, DMatrix, DVector, SymmetricEigen};
use rand::Rng;

use crate::error::{Error, Result};

/// Relative tolerance for the symmetry check on input covariances.
const SYMMETRY_RTOL: f64 = 1e-12;

/// A Gaussian density with mean vector and dense covariance matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianDensity {
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
}

impl GaussianDensity {
    /// Builds a density, symmetrizing the covariance.
    ///
    /// Panics if shapes disagree, the covariance is asymmetric beyond
    /// roundoff, or an eigenvalue is negative beyond `-1e-9 * trace`.
    pub fn new(mean: DVector<f64>, cov: DMatrix<f64>) -> Self {
        assert_eq!(mean.len(), cov.nrows(), "mean/cov dimension mismatch");
        assert_eq!(cov.nrows(), cov.ncols(), "covariance must be square");
        let scale = cov.amax().max(1.0);
        let asym = (&cov - cov.transpose()).amax();
        assert!(
            asym <= SYMMETRY_RTOL * scale,
            "covariance asymmetric beyond tolerance: {asym:e}"
        );
        let cov = symmetrize(&cov);
        debug_assert!(
            min_eigenvalue(&cov) >= -1e-9 * cov.trace().abs().max(1e-300),
            "covariance has a significantly negative eigenvalue"
        );
        Self { mean, cov }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    /// Draws one sample, consuming `dim` standard normals from `rng`.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<DVector<f64>> {
        let g = cholesky_factor(&self.cov)?;
        let std: DVector<f64> =
            DVector::from_iterator(self.dim(), (0..self.dim()).map(|_| standard_normal(rng)));
        Ok(&self.mean + g * std)
    }
}

fn standard_normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    // Box-Muller; consumes two uniforms per call for a branch-free draw.
    let u1: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
    let u2: f64 = rng.gen::<f64>();
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

/// Averages a matrix with its transpose.
pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    0.5 * (m + m.transpose())
}

fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    SymmetricEigen::new(m.clone())
        .eigenvalues
        .iter()
        .fold(f64::INFINITY, |a, &b| a.min(b))
}

/// Lower-triangular factor G with G * G^T = P.
///
/// Falls back to eigenvalue clamping plus a tiny diagonal jitter when the
/// plain factorization fails; the jitter stays far below the 1e-10
/// relative reconstruction tolerance.
pub fn cholesky_factor(p: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    assert_eq!(p.nrows(), p.ncols(), "covariance must be square");
    let n = p.nrows();
    if p.iter().any(|x| !x.is_finite()) {
        return Err(Error::NotPositiveDefinite);
    }
    if p.amax() == 0.0 {
        return Ok(DMatrix::zeros(n, n));
    }
    let sym = symmetrize(p);
    if let Some(ch) = Cholesky::new(sym.clone()) {
        return Ok(ch.l());
    }
    let repaired = ensure_psd(&sym, 0.0);
    let scale = repaired.diagonal().amax().max(f64::MIN_POSITIVE);
    for jitter in [1e-14, 1e-12, 1e-10] {
        let bumped = &repaired + DMatrix::identity(n, n) * (jitter * scale);
        if let Some(ch) = Cholesky::new(bumped) {
            return Ok(ch.l());
        }
    }
    Err(Error::NotPositiveDefinite)
}

/// Clamps eigenvalues of a symmetric matrix to at least `floor`.
///
/// Returns the input unchanged when it already satisfies the floor.
pub fn ensure_psd(m: &DMatrix<f64>, floor: f64) -> DMatrix<f64> {
    assert_eq!(m.nrows(), m.ncols(), "matrix must be square");
    let eig = SymmetricEigen::new(symmetrize(m));
    if eig.eigenvalues.iter().all(|&l| l >= floor) {
        return m.clone();
    }
    let clamped = DMatrix::from_diagonal(&eig.eigenvalues.map(|l| l.max(floor)));
    symmetrize(&(&eig.eigenvectors * clamped * eig.eigenvectors.transpose()))
}

/// Extracts the marginal over a contiguous index range of a joint density.
pub fn marginalize(joint: &GaussianDensity, range: std::ops::Range<usize>) -> Result<GaussianDensity> {
    if range.end > joint.dim() || range.start > range.end {
        return Err(Error::IndexOutOfRange {
            start: range.start,
            end: range.end,
            dim: joint.dim(),
        });
    }
    let len = range.end - range.start;
    let mean = joint.mean.rows(range.start, len).into_owned();
    let cov = joint.cov.view((range.start, range.start), (len, len)).into_owned();
    Ok(GaussianDensity { mean, cov })
}

/// Moment-matches a Gaussian mixture into a single Gaussian.
///
/// Weights must be nonnegative and sum to one within 1e-9.
pub fn moment_match(weights: &[f64], components: &[GaussianDensity]) -> Result<GaussianDensity> {
    if components.is_empty() {
        return Err(Error::EmptyMixture);
    }
    assert_eq!(weights.len(), components.len(), "one weight per component");
    let total: f64 = weights.iter().sum();
    assert!(
        (total - 1.0).abs() <= 1e-9 && weights.iter().all(|&w| w >= 0.0),
        "weights must be nonnegative and sum to one"
    );
    let dim = components[0].dim();
    for c in components {
        if c.dim() != dim {
            return Err(Error::DimensionMismatch { expected: dim, got: c.dim() });
        }
    }
    let mut mean = DVector::zeros(dim);
    for (w, c) in weights.iter().zip(components) {
        mean += *w * &c.mean;
    }
    let mut cov = DMatrix::zeros(dim, dim);
    for (w, c) in weights.iter().zip(components) {
        let d = &c.mean - &mean;
        cov += *w * (&c.cov + &d * d.transpose());
    }
    Ok(GaussianDensity {
        mean,
        cov: ensure_psd(&symmetrize(&cov), 0.0),
    })
}

/// Closed-form KL divergence KL(a || b) between Gaussians.
pub fn kl_divergence(a: &GaussianDensity, b: &GaussianDensity) -> Result<f64> {
    if a.dim() != b.dim() {
        return Err(Error::DimensionMismatch { expected: a.dim(), got: b.dim() });
    }
    if a.mean == b.mean && a.cov == b.cov {
        return Ok(0.0);
    }
    let n = a.dim() as f64;
    let chol_b = Cholesky::new(b.cov.clone()).ok_or(Error::SingularCovariance)?;
    let chol_a = Cholesky::new(a.cov.clone()).ok_or(Error::SingularCovariance)?;
    let log_det_b = 2.0 * chol_b.l().diagonal().iter().map(|d| d.ln()).sum::<f64>();
    let log_det_a = 2.0 * chol_a.l().diagonal().iter().map(|d| d.ln()).sum::<f64>();
    let trace = chol_b.solve(&a.cov).trace();
    let d = &b.mean - &a.mean;
    let maha = d.dot(&chol_b.solve(&d));
    let kl = 0.5 * (trace + maha - n + log_det_b - log_det_a);
    // Roundoff can push the value a hair below zero for near-equal inputs.
    if kl < 0.0 {
        debug_assert!(kl > -1e-9, "KL divergence significantly negative: {kl}");
        return Ok(0.0);
    }
    Ok(kl)
}

/// Symmetrized KL divergence, used as the iteration convergence measure.
pub fn symmetric_kl(a: &GaussianDensity, b: &GaussianDensity) -> Result<f64> {
    Ok(kl_divergence(a, b)? + kl_divergence(b, a)?)
}

/// Log-density of a zero-mean Gaussian evaluated at `residual`.
///
/// The caller wraps circular residual components before calling.
pub fn log_pdf_residual(residual: &DVector<f64>, cov: &DMatrix<f64>) -> Result<f64> {
    let n = residual.len() as f64;
    let chol = Cholesky::new(symmetrize(cov)).ok_or(Error::SingularCovariance)?;
    let log_det = 2.0 * chol.l().diagonal().iter().map(|d| d.ln()).sum::<f64>();
    let maha = residual.dot(&chol.solve(residual));
    Ok(-0.5 * (n * (2.0 * std::f64::consts::PI).ln() + log_det + maha))
}
