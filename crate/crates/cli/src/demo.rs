//! One-dimensional linearization demo.
//!
//! Compares prior linearization (EKF) against iterated posterior
//! linearization on the quadratic toy problem h(x) = -0.1 x^2 + 3 with
//! prior N(3, 4), noise variance 0.1 and observation 0.5, and checks both
//! against the exact posterior computed by quadrature on a dense grid.

use mmwave_slam::gaussian::{kl_divergence, symmetric_kl, GaussianDensity};
use mmwave_slam::linearization::{ekf_linearize, kf_update, slr, IplfOptions};
use nalgebra::{DMatrix, DVector};

fn toy(x: &DVector<f64>) -> mmwave_slam::Result<DVector<f64>> {
    Ok(DVector::from_row_slice(&[-0.1 * x[0] * x[0] + 3.0]))
}

fn scalar(mean: f64, var: f64) -> GaussianDensity {
    GaussianDensity::new(
        DVector::from_row_slice(&[mean]),
        DMatrix::from_row_slice(1, 1, &[var]),
    )
}

/// Exact posterior moments by quadrature over x in [-30, 30], step 1e-3.
fn grid_posterior(prior_mean: f64, prior_var: f64, z: f64, noise_var: f64) -> GaussianDensity {
    let step = 1e-3;
    let n = (60.0 / step) as usize + 1;
    let mut total = 0.0;
    let mut mean = 0.0;
    for i in 0..n {
        let x = -30.0 + i as f64 * step;
        let h = -0.1 * x * x + 3.0;
        let log_w = -0.5 * (x - prior_mean) * (x - prior_mean) / prior_var
            - 0.5 * (z - h) * (z - h) / noise_var;
        let w = log_w.exp();
        total += w;
        mean += w * x;
    }
    mean /= total;
    let mut var = 0.0;
    for i in 0..n {
        let x = -30.0 + i as f64 * step;
        let h = -0.1 * x * x + 3.0;
        let log_w = -0.5 * (x - prior_mean) * (x - prior_mean) / prior_var
            - 0.5 * (z - h) * (z - h) / noise_var;
        var += log_w.exp() * (x - mean) * (x - mean);
    }
    var /= total;
    scalar(mean, var)
}

pub fn run() -> Result<(), String> {
    let prior = scalar(3.0, 4.0);
    let z = DVector::from_row_slice(&[0.5]);
    let r = DMatrix::from_row_slice(1, 1, &[0.1]);
    let opts = IplfOptions::default();

    let ekf_approx = ekf_linearize(&toy, &prior).map_err(|e| e.to_string())?;
    let ekf_post = kf_update(&prior, &ekf_approx, &z, &r, &[]).map_err(|e| e.to_string())?;
    println!(
        "prior linearization (EKF):   mean {:.6}  var {:.6}",
        ekf_post.mean[0],
        ekf_post.cov[(0, 0)]
    );

    // Iterated posterior linearization, printing each accepted iterate.
    let mut linearization_density = prior.clone();
    let mut last: Option<GaussianDensity> = None;
    let mut iplf_post = prior.clone();
    for iteration in 1..=opts.max_iterations {
        let (approx, _) = slr(&toy, &linearization_density).map_err(|e| e.to_string())?;
        let post = kf_update(&prior, &approx, &z, &r, &[]).map_err(|e| e.to_string())?;
        if let Some(prev) = &last {
            if symmetric_kl(&post, prev).map_err(|e| e.to_string())? < opts.kl_threshold {
                iplf_post = post;
                break;
            }
        }
        println!(
            "posterior linearization it {iteration}: mean {:.6}  var {:.6}",
            post.mean[0],
            post.cov[(0, 0)]
        );
        iplf_post = post.clone();
        linearization_density = post.clone();
        last = Some(post);
    }

    let exact = grid_posterior(3.0, 4.0, 0.5, 0.1);
    println!(
        "grid-truth posterior:        mean {:.6}  var {:.6}",
        exact.mean[0],
        exact.cov[(0, 0)]
    );

    let kl_ekf = kl_divergence(&ekf_post, &exact).map_err(|e| e.to_string())?;
    let kl_iplf = kl_divergence(&iplf_post, &exact).map_err(|e| e.to_string())?;
    println!("KL(EKF  || grid truth) = {kl_ekf:.6}");
    println!("KL(IPLF || grid truth) = {kl_iplf:.6}");

    if kl_iplf < kl_ekf {
        println!("PASS: posterior linearization is closer to the exact posterior");
        Ok(())
    } else {
        Err(format!(
            "posterior linearization did not improve on the prior route: {kl_iplf} >= {kl_ekf}"
        ))
    }
}
