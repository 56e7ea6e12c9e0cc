//! Affine-plus-noise approximations of nonlinear measurement functions.
//!
//! Three routes are provided:
//! - statistical linear regression (SLR) through third-degree cubature
//!   points, returning the MSE-optimal affine fit plus its residual
//!   covariance;
//! - first-order Taylor linearization at the mean with zero residual
//!   covariance (the EKF route), using central finite differences;
//! - the iterated posterior linearization filter, which repeats the SLR
//!   at successive posterior approximations starting from the prior.
//!
//! Angle-valued function components are re-centered before moments are
//! taken so that a point spread straddling the +/-pi seam does not
//! corrupt the regression; innovation residuals wrap the same way.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::gaussian::{
    cholesky_factor, ensure_psd, symmetric_kl, symmetrize, GaussianDensity,
};
use crate::geometry::wrap_angle;

/// Affine approximation `h(s) ~ H s + b + e`, `e ~ N(0, omega)`.
#[derive(Debug, Clone)]
pub struct AffineApprox {
    pub h: DMatrix<f64>,
    pub b: DVector<f64>,
    pub omega: DMatrix<f64>,
}

/// Propagated first and second moments of a function under a density.
#[derive(Debug, Clone)]
pub struct SlrStatistics {
    /// Predicted function value (mean of propagated points).
    pub z_pred: DVector<f64>,
    /// Spread of the propagated points.
    pub s_zz: DMatrix<f64>,
    /// Cross-covariance between state and propagated points.
    pub s_sz: DMatrix<f64>,
}

/// Iteration controls for the posterior linearization loop.
#[derive(Debug, Clone, Copy)]
pub struct IplfOptions {
    pub max_iterations: usize,
    pub kl_threshold: f64,
}

impl Default for IplfOptions {
    fn default() -> Self {
        Self {
            max_iterations: 10,
            kl_threshold: 1e-4,
        }
    }
}

impl IplfOptions {
    pub fn new(max_iterations: usize, kl_threshold: f64) -> Self {
        assert!(max_iterations >= 1, "at least one iteration required");
        assert!(kl_threshold > 0.0);
        Self { max_iterations, kl_threshold }
    }
}

/// The 2d equal-weight cubature points of a density, each with weight
/// `1/(2d)`: `s_c = G delta_c + m` with `delta_c` the columns of
/// `sqrt(d) [I, -I]`.
pub fn cubature_points(density: &GaussianDensity) -> Result<Vec<DVector<f64>>> {
    let d = density.dim();
    let g = cholesky_factor(&density.cov)?;
    let scale = (d as f64).sqrt();
    let mut points = Vec::with_capacity(2 * d);
    for c in 0..2 * d {
        let mut delta = DVector::zeros(d);
        if c < d {
            delta[c] = scale;
        } else {
            delta[c - d] = -scale;
        }
        points.push(&g * delta + &density.mean);
    }
    Ok(points)
}

/// Propagates the cubature points of `density` through `f` and forms the
/// moments needed for regression and prediction.
///
/// Components flagged in `circular` are re-centered around the first
/// propagated point so angle wraparound cannot split the point cloud.
pub fn propagate_moments<F>(
    f: &F,
    density: &GaussianDensity,
    circular: &[bool],
) -> Result<SlrStatistics>
where
    F: Fn(&DVector<f64>) -> Result<DVector<f64>>,
{
    let points = cubature_points(density)?;
    let count = points.len() as f64;
    let mut propagated = Vec::with_capacity(points.len());
    for p in &points {
        let z = f(p).map_err(|e| Error::FunctionEvaluationFailure(Box::new(e)))?;
        propagated.push(z);
    }
    if !circular.is_empty() {
        assert_eq!(circular.len(), propagated[0].len(), "circular mask length");
        let reference = propagated[0].clone();
        for z in propagated.iter_mut() {
            for (k, &is_circ) in circular.iter().enumerate() {
                if is_circ {
                    z[k] = reference[k] + wrap_angle(z[k] - reference[k]);
                }
            }
        }
    }
    // Accumulate deviations from the first point; keeps a degenerate
    // (zero-spread) point set bit-exact and improves conditioning.
    let dim_out = propagated[0].len();
    let mut z_pred = DVector::zeros(dim_out);
    for z in &propagated {
        z_pred += z - &propagated[0];
    }
    z_pred = &propagated[0] + z_pred / count;
    let mut s_zz = DMatrix::zeros(dim_out, dim_out);
    let mut s_sz = DMatrix::zeros(density.dim(), dim_out);
    for (p, z) in points.iter().zip(&propagated) {
        let dz = z - &z_pred;
        let ds = p - &density.mean;
        s_zz += &dz * dz.transpose();
        s_sz += ds * dz.transpose();
    }
    s_zz /= count;
    s_sz /= count;
    Ok(SlrStatistics { z_pred, s_zz: symmetrize(&s_zz), s_sz })
}

/// Statistical linear regression of `f` under `density`.
///
/// `H = S_sz^T P^-1`, `b = z_pred - H m`, `omega = S_zz - H P H^T`
/// (PSD-repaired).
pub fn slr<F>(f: &F, density: &GaussianDensity) -> Result<(AffineApprox, SlrStatistics)>
where
    F: Fn(&DVector<f64>) -> Result<DVector<f64>>,
{
    slr_wrapped(f, density, &[])
}

/// SLR with angle-aware moment computation; see [`propagate_moments`].
pub fn slr_wrapped<F>(
    f: &F,
    density: &GaussianDensity,
    circular: &[bool],
) -> Result<(AffineApprox, SlrStatistics)>
where
    F: Fn(&DVector<f64>) -> Result<DVector<f64>>,
{
    let stats = propagate_moments(f, density, circular)?;
    let chol = spd_cholesky(&density.cov).ok_or(Error::NotPositiveDefinite)?;
    // H^T = P^-1 S_sz, solved without forming the inverse.
    let h = chol.solve(&stats.s_sz).transpose();
    let b = &stats.z_pred - &h * &density.mean;
    let omega = ensure_psd(&symmetrize(&(&stats.s_zz - &h * &density.cov * h.transpose())), 0.0);
    Ok((AffineApprox { h, b, omega }, stats))
}

/// First-order Taylor linearization at the mean, zero residual covariance.
pub fn ekf_linearize<F>(f: &F, density: &GaussianDensity) -> Result<AffineApprox>
where
    F: Fn(&DVector<f64>) -> Result<DVector<f64>>,
{
    ekf_linearize_wrapped(f, density, &[])
}

/// EKF linearization with circular-aware finite differences.
pub fn ekf_linearize_wrapped<F>(
    f: &F,
    density: &GaussianDensity,
    circular: &[bool],
) -> Result<AffineApprox>
where
    F: Fn(&DVector<f64>) -> Result<DVector<f64>>,
{
    let m = &density.mean;
    let fm = f(m).map_err(|e| Error::FunctionEvaluationFailure(Box::new(e)))?;
    let dim_in = m.len();
    let dim_out = fm.len();
    if !circular.is_empty() {
        assert_eq!(circular.len(), dim_out, "circular mask length");
    }
    let mut h = DMatrix::zeros(dim_out, dim_in);
    for i in 0..dim_in {
        let step = 1e-6 * m[i].abs().max(1.0);
        let mut plus = m.clone();
        plus[i] += step;
        let mut minus = m.clone();
        minus[i] -= step;
        let f_plus = f(&plus).map_err(|e| Error::FunctionEvaluationFailure(Box::new(e)))?;
        let f_minus = f(&minus).map_err(|e| Error::FunctionEvaluationFailure(Box::new(e)))?;
        for k in 0..dim_out {
            let mut diff = f_plus[k] - f_minus[k];
            if circular.get(k).copied().unwrap_or(false) {
                diff = wrap_angle(diff);
            }
            h[(k, i)] = diff / (2.0 * step);
        }
    }
    let b = &fm - &h * m;
    Ok(AffineApprox { h, b, omega: DMatrix::zeros(dim_out, dim_out) })
}

/// Kalman measurement update of `prior` under an affine approximation.
///
/// Circular components of the innovation wrap to (-pi, pi]. The updated
/// covariance is symmetrized and PSD-repaired.
pub fn kf_update(
    prior: &GaussianDensity,
    approx: &AffineApprox,
    z: &DVector<f64>,
    r: &DMatrix<f64>,
    circular: &[bool],
) -> Result<GaussianDensity> {
    let dim_out = approx.h.nrows();
    if z.len() != dim_out || approx.h.ncols() != prior.dim() {
        return Err(Error::DimensionMismatch { expected: dim_out, got: z.len() });
    }
    let hp = &approx.h * &prior.cov;
    let s = symmetrize(&(&hp * approx.h.transpose() + &approx.omega + r));
    let chol = spd_cholesky(&s).ok_or(Error::SingularInnovation)?;
    // K = P H^T S^-1 via S K^T = H P.
    let gain = chol.solve(&hp).transpose();
    let mut residual = z - &approx.h * &prior.mean - &approx.b;
    for (k, &is_circ) in circular.iter().enumerate() {
        if is_circ {
            residual[k] = wrap_angle(residual[k]);
        }
    }
    let mean = &prior.mean + &gain * residual;
    let cov = ensure_psd(&symmetrize(&(&prior.cov - &gain * &hp)), 0.0);
    Ok(GaussianDensity { mean, cov })
}

/// Iterated posterior linearization: repeats the SLR at the latest
/// posterior approximation (starting from the prior) and re-updates the
/// original prior, until successive posteriors agree in symmetric KL or
/// the iteration cap is reached.
///
/// The returned count is the number of posterior refinements actually
/// applied; a final pass that merely confirms convergence is not counted,
/// so an affine function reports exactly one iteration.
pub fn iplf<F>(
    f: &F,
    prior: &GaussianDensity,
    z: &DVector<f64>,
    r: &DMatrix<f64>,
    circular: &[bool],
    opts: &IplfOptions,
) -> Result<(GaussianDensity, usize)>
where
    F: Fn(&DVector<f64>) -> Result<DVector<f64>>,
{
    let mut linearization_density = prior.clone();
    let mut last: Option<GaussianDensity> = None;
    let mut iterations = 0usize;
    loop {
        let (approx, _) = slr_wrapped(f, &linearization_density, circular)?;
        let posterior = kf_update(prior, &approx, z, r, circular)?;
        if let Some(prev) = &last {
            if symmetric_kl(&posterior, prev)? < opts.kl_threshold {
                return Ok((posterior, iterations));
            }
        }
        iterations += 1;
        if iterations >= opts.max_iterations {
            return Ok((posterior, iterations));
        }
        linearization_density = posterior.clone();
        last = Some(posterior);
    }
}

/// Cholesky with the same escalation ladder as [`cholesky_factor`]: plain
/// factorization, then eigenvalue clamping plus growing diagonal jitter.
fn spd_cholesky(p: &DMatrix<f64>) -> Option<nalgebra::Cholesky<f64, nalgebra::Dyn>> {
    if p.iter().any(|x| !x.is_finite()) || p.amax() == 0.0 {
        return None;
    }
    let sym = symmetrize(p);
    if let Some(ch) = nalgebra::Cholesky::new(sym.clone()) {
        return Some(ch);
    }
    let repaired = ensure_psd(&sym, 0.0);
    let scale = repaired.diagonal().amax().max(f64::MIN_POSITIVE);
    for jitter in [1e-14, 1e-12, 1e-10] {
        let bumped = &repaired + DMatrix::identity(p.nrows(), p.ncols()) * (jitter * scale);
        if let Some(ch) = nalgebra::Cholesky::new(bumped) {
            return Some(ch);
        }
    }
    None
}
