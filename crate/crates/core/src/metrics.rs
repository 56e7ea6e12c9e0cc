//! Mapping and positioning performance metrics.
//!
//! The GOSPA set distance scores an estimated landmark set against the
//! truth, decomposing into localization, missed-detection and
//! false-detection terms. UE accuracy is summarized as per-component RMSE
//! plus both the filter-reported and the empirical standard deviations.

use nalgebra::Vector3;

use crate::assignment::{solve_assignment, CostMatrix};
use crate::error::{Error, Result};
use crate::geometry::{wrap_angle, LandmarkKind, UEState};
use crate::pmb::PmbMap;

/// GOSPA parameters: cutoff distance, exponent and cardinality penalty.
#[derive(Debug, Clone, Copy)]
pub struct GospaConfig {
    pub cutoff: f64,
    pub exponent: f64,
    pub alpha: f64,
}

impl Default for GospaConfig {
    fn default() -> Self {
        Self { cutoff: 20.0, exponent: 2.0, alpha: 2.0 }
    }
}

impl GospaConfig {
    pub fn new(cutoff: f64, exponent: f64, alpha: f64) -> Self {
        assert!(cutoff > 0.0, "cutoff must be positive");
        assert!(exponent >= 1.0, "exponent must be at least 1");
        assert!(alpha > 0.0 && alpha <= 2.0, "alpha in (0, 2]");
        Self { cutoff, exponent, alpha }
    }
}

/// GOSPA distance with its decomposition; all terms in meters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GospaResult {
    pub total: f64,
    pub localization: f64,
    pub missed: f64,
    pub false_detection: f64,
}

/// GOSPA distance between two point sets.
///
/// Minimizes `sum of matched d^p + (c^p / alpha) * (#missed + #false)`
/// over partial matchings restricted to pairs closer than the cutoff,
/// by solving one padded assignment problem: matching a pair saves both
/// unmatched penalties, so pair entries carry `d^p - 2 c^p / alpha` and
/// dummy rows/columns realize "leave unmatched" at zero cost.
pub fn gospa(truth: &[Vector3<f64>], estimate: &[Vector3<f64>], cfg: &GospaConfig) -> GospaResult {
    let n = truth.len();
    let m = estimate.len();
    let unmatched = cfg.cutoff.powf(cfg.exponent) / cfg.alpha;
    if n == 0 && m == 0 {
        return GospaResult { total: 0.0, localization: 0.0, missed: 0.0, false_detection: 0.0 };
    }

    let size = n + m;
    let mut cost = CostMatrix::filled(size, size, f64::INFINITY);
    for (i, t) in truth.iter().enumerate() {
        for (j, e) in estimate.iter().enumerate() {
            let d = (t - e).norm();
            if d < cfg.cutoff {
                cost.set(i, j, d.powf(cfg.exponent) - 2.0 * unmatched);
            }
        }
        // Truth i left unmatched.
        cost.set(i, m + i, 0.0);
    }
    for j in 0..m {
        // Estimate j left unmatched.
        cost.set(n + j, j, 0.0);
        for jd in 0..n {
            // Dummy-dummy pairings absorb the remaining slots.
            cost.set(n + j, m + jd, 0.0);
        }
    }
    let solved = solve_assignment(&cost).expect("padded GOSPA matrix is always feasible");

    let mut localization_p = 0.0;
    let mut missed_count = 0usize;
    let mut false_count = 0usize;
    for (i, t) in truth.iter().enumerate() {
        let col = solved.row_to_col[i];
        if col < m {
            localization_p += (t - estimate[col]).norm().powf(cfg.exponent);
        } else {
            missed_count += 1;
        }
    }
    for j in 0..m {
        let matched = (0..n).any(|i| solved.row_to_col[i] == j);
        if !matched {
            false_count += 1;
        }
    }
    let missed_p = unmatched * missed_count as f64;
    let false_p = unmatched * false_count as f64;
    let inv_p = 1.0 / cfg.exponent;
    GospaResult {
        total: (localization_p + missed_p + false_p).powf(inv_p),
        localization: localization_p.powf(inv_p),
        missed: missed_p.powf(inv_p),
        false_detection: false_p.powf(inv_p),
    }
}

/// Map estimate: per-kind position sets.
#[derive(Debug, Clone, Default)]
pub struct MapEstimate {
    pub va: Vec<Vector3<f64>>,
    pub sp: Vec<Vector3<f64>>,
}

/// Extracts the landmark estimate from a PMB map: each Bernoulli with
/// existence at or above the threshold emits its MAP-kind mean position
/// into that kind's set.
pub fn extract_map_estimate(map: &PmbMap, r_threshold: f64) -> MapEstimate {
    let mut out = MapEstimate::default();
    for b in &map.bernoullis {
        if b.existence < r_threshold {
            continue;
        }
        let kc = b.map_kind();
        let mean = &kc.density.mean;
        let pos = Vector3::new(mean[0], mean[1], mean[2]);
        match kc.kind {
            LandmarkKind::Va => out.va.push(pos),
            LandmarkKind::Sp => out.sp.push(pos),
            LandmarkKind::Bs => {}
        }
    }
    out
}

/// One per-step UE estimate: posterior mean and per-component standard
/// deviations `[x, y, z, heading, bias]` reported by the filter.
#[derive(Debug, Clone)]
pub struct UeStepEstimate {
    pub mean: UEState,
    pub reported_std: [f64; 5],
}

/// Per-component accuracy/precision summary over runs and steps.
#[derive(Debug, Clone, Copy)]
pub struct UeErrorSummary {
    /// RMSE of the horizontal (x, y) position error, meters.
    pub pos_rmse: f64,
    /// RMSE of the circular heading residual, degrees.
    pub heading_rmse_deg: f64,
    /// RMSE of the clock-bias error, meters.
    pub bias_rmse: f64,
    /// Time- and run-averaged filter-reported stds: x, y (m), heading
    /// (deg), bias (m).
    pub reported_std: [f64; 4],
    /// Empirical stds of the signed errors across all runs and steps,
    /// same components and units.
    pub empirical_std: [f64; 4],
}

/// Summarizes estimation errors of several runs against a common truth.
pub fn ue_error_summary(
    runs: &[Vec<UeStepEstimate>],
    truth: &[UEState],
) -> Result<UeErrorSummary> {
    assert!(!runs.is_empty(), "at least one run required");
    for run in runs {
        if run.len() != truth.len() {
            return Err(Error::LengthMismatch { expected: truth.len(), got: run.len() });
        }
    }
    let deg = 180.0 / std::f64::consts::PI;
    let count = (runs.len() * truth.len()) as f64;
    let mut pos_sq = 0.0;
    let mut heading_sq = 0.0;
    let mut bias_sq = 0.0;
    let mut err_sums = [0.0f64; 4];
    let mut err_sq_sums = [0.0f64; 4];
    let mut reported = [0.0f64; 4];
    for run in runs {
        for (est, tru) in run.iter().zip(truth) {
            let ex = est.mean.position.x - tru.position.x;
            let ey = est.mean.position.y - tru.position.y;
            let eh = wrap_angle(est.mean.heading - tru.heading) * deg;
            let eb = est.mean.clock_bias - tru.clock_bias;
            pos_sq += ex * ex + ey * ey;
            heading_sq += eh * eh;
            bias_sq += eb * eb;
            for (k, e) in [ex, ey, eh, eb].into_iter().enumerate() {
                err_sums[k] += e;
                err_sq_sums[k] += e * e;
            }
            reported[0] += est.reported_std[0];
            reported[1] += est.reported_std[1];
            reported[2] += est.reported_std[3] * deg;
            reported[3] += est.reported_std[4];
        }
    }
    let mut empirical_std = [0.0f64; 4];
    for k in 0..4 {
        let mean = err_sums[k] / count;
        empirical_std[k] = (err_sq_sums[k] / count - mean * mean).max(0.0).sqrt();
        reported[k] /= count;
    }
    Ok(UeErrorSummary {
        pos_rmse: (pos_sq / count).sqrt(),
        heading_rmse_deg: (heading_sq / count).sqrt(),
        bias_rmse: (bias_sq / count).sqrt(),
        reported_std: reported,
        empirical_std,
    })
}
