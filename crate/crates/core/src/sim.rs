//! Scenario generation, measurement simulation and Monte Carlo execution.
//!
//! Ground truth is deterministic: the UE follows the noiseless motion
//! model and virtual anchors are the BS mirrored across each reflecting
//! plane. Measurement simulation draws detections, noise and clutter
//! from a counter-based generator (ChaCha12) so that a (config, seed)
//! pair fully determines every output byte; Monte Carlo run `r` uses
//! `seed + r` and runs execute concurrently.

use nalgebra::{DMatrix, DVector, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;

use crate::config::ExperimentConfig;
use crate::error::{Error, Result};
use crate::filter::{step, FilterConfig, FilterState, Linearizer, MotionModel};
use crate::gaussian::{cholesky_factor, GaussianDensity};
use crate::geometry::{
    in_fov, wrap_angle, Landmark, LandmarkKind, Measurement, MeasurementModel, SensorModel,
    UEState, MEAS_DIM,
};
use crate::linearization::IplfOptions;
use crate::metrics::{extract_map_estimate, gospa, GospaConfig, GospaResult, UeStepEstimate};
use crate::pmb::{PmbMap, PppIntensity};

/// Deterministic ground truth of one scenario.
#[derive(Debug, Clone)]
pub struct GroundTruth {
    pub initial: UEState,
    /// UE state after each step, `1..=steps`.
    pub ue_states: Vec<UEState>,
    /// Unknown landmarks (VAs and SPs); the BS is configured separately.
    pub landmarks: Vec<Landmark>,
}

impl GroundTruth {
    pub fn positions_of(&self, kind: LandmarkKind) -> Vec<Vector3<f64>> {
        self.landmarks
            .iter()
            .filter(|l| l.kind == kind)
            .map(|l| l.position)
            .collect()
    }
}

/// Mirrors a point across the plane `normal . x = offset`.
fn mirror_across_plane(point: &Vector3<f64>, normal: &Vector3<f64>, offset: f64) -> Vector3<f64> {
    let norm_sq = normal.norm_squared();
    point + 2.0 * (offset - normal.dot(point)) / norm_sq * normal
}

/// Builds the ground truth: noiseless trajectory plus landmark set.
pub fn generate_scenario(cfg: &ExperimentConfig) -> Result<GroundTruth> {
    let bs = Vector3::from(cfg.scenario.bs_position);
    let mut landmarks = Vec::new();
    for plane in &cfg.scenario.va_planes {
        let normal = Vector3::from(plane.normal);
        if normal.norm_squared() < 1e-18 {
            return Err(Error::DegeneratePlane);
        }
        landmarks.push(Landmark::new(
            mirror_across_plane(&bs, &normal, plane.offset),
            LandmarkKind::Va,
        ));
    }
    for sp in &cfg.scenario.sp_positions {
        landmarks.push(Landmark::new(Vector3::from(*sp), LandmarkKind::Sp));
    }

    let motion = build_motion(cfg, true);
    let initial = UEState::new(
        Vector3::from(cfg.trajectory.initial_position),
        cfg.trajectory.initial_heading,
        cfg.trajectory.initial_bias,
    );
    let mut ue_states = Vec::with_capacity(cfg.scenario.steps);
    let mut current = initial.as_vector();
    for _ in 0..cfg.scenario.steps {
        current = (motion.transition)(&current);
        ue_states.push(UEState::from_vector(&current));
    }
    Ok(GroundTruth { initial, ue_states, landmarks })
}

/// Builds the sensor model from the config.
pub fn build_sensor(cfg: &ExperimentConfig) -> SensorModel {
    let s = &cfg.sensor;
    let noise = DMatrix::from_diagonal(&DVector::from_row_slice(&[
        s.toa_std * s.toa_std,
        s.angle_std * s.angle_std,
        s.angle_std * s.angle_std,
        s.angle_std * s.angle_std,
        s.angle_std * s.angle_std,
    ]));
    SensorModel::new(s.detection_prob, s.fov_radius_sp, s.clutter_rate, s.toa_max, noise)
}

/// Builds the UE motion model; `noiseless` zeroes the process noise for
/// ground-truth generation.
pub fn build_motion(cfg: &ExperimentConfig, noiseless: bool) -> MotionModel {
    let n = &cfg.process_noise;
    let q = if noiseless {
        DMatrix::zeros(5, 5)
    } else {
        DMatrix::from_diagonal(&DVector::from_row_slice(&[
            n.pos_std * n.pos_std,
            n.pos_std * n.pos_std,
            n.z_std * n.z_std,
            n.heading_std * n.heading_std,
            n.bias_std * n.bias_std,
        ]))
    };
    MotionModel::constant_turn(
        cfg.trajectory.speed,
        cfg.trajectory.turn_rate,
        cfg.trajectory.step_duration,
        q,
    )
}

pub fn build_ppp(cfg: &ExperimentConfig) -> PppIntensity {
    PppIntensity::new(
        Vector3::from(cfg.ppp.region_min),
        Vector3::from(cfg.ppp.region_max),
        cfg.ppp.rate_va,
        cfg.ppp.rate_sp,
    )
}

pub fn build_filter_config(cfg: &ExperimentConfig, linearizer: Linearizer) -> FilterConfig {
    let f = &cfg.filter;
    FilterConfig {
        gamma: f.gamma,
        linearizer,
        iplf: IplfOptions::new(f.iplf_max_iterations, f.iplf_kl_threshold),
        gate: f.gate,
        prune_r_min: f.prune_r_min,
        prune_kind_w_min: f.prune_kind_w_min,
        merge_dist: f.merge_dist,
        extract_threshold: f.extract_threshold,
    }
}

pub fn build_gospa_config(cfg: &ExperimentConfig) -> GospaConfig {
    GospaConfig::new(cfg.gospa.cutoff, cfg.gospa.exponent, cfg.gospa.alpha)
}

/// Initial filter state over an empty map. The prior covariance comes
/// from the config; the prior mean is a draw from that prior around the
/// true initial UE state, so the initialization error is statistically
/// consistent with the reported uncertainty.
pub fn initial_filter_state<R: Rng + ?Sized>(
    cfg: &ExperimentConfig,
    truth: &GroundTruth,
    rng: &mut R,
) -> FilterState {
    let p = &cfg.initial_prior;
    let cov = DMatrix::from_diagonal(&DVector::from_row_slice(&[
        p.pos_std * p.pos_std,
        p.pos_std * p.pos_std,
        p.z_std * p.z_std,
        p.heading_std * p.heading_std,
        p.bias_std * p.bias_std,
    ]));
    let prior = GaussianDensity::new(truth.initial.as_vector(), cov.clone());
    let mut mean = prior.sample(rng).expect("prior covariance is PSD");
    mean[3] = wrap_angle(mean[3]);
    let ue = GaussianDensity::new(mean, cov);
    FilterState::new(ue, PmbMap::new(build_ppp(cfg)))
}

fn poisson_count<R: Rng + ?Sized>(rng: &mut R, rate: f64) -> usize {
    if rate <= 0.0 {
        return 0;
    }
    let limit = (-rate).exp();
    let mut count = 0usize;
    let mut product: f64 = 1.0;
    loop {
        product *= rng.gen::<f64>();
        if product <= limit {
            return count;
        }
        count += 1;
    }
}

/// Simulates one scan: each in-FoV landmark (BS included) is detected
/// with probability `p_D` and measured with additive Gaussian noise;
/// Poisson-distributed clutter is uniform over the measurement space;
/// the returned order is shuffled.
pub fn simulate_measurements<R: Rng + ?Sized>(
    truth: &GroundTruth,
    model: &MeasurementModel,
    ue: &UEState,
    sensor: &SensorModel,
    rng: &mut R,
) -> Vec<Measurement> {
    let noise_factor = cholesky_factor(&sensor.noise_cov).expect("noise covariance is PSD");
    let mut out = Vec::new();
    let bs_landmark = model.bs_landmark();
    for landmark in std::iter::once(&bs_landmark).chain(truth.landmarks.iter()) {
        if !in_fov(landmark, ue, sensor) {
            continue;
        }
        if !rng.gen_bool(sensor.detection_prob) {
            continue;
        }
        let clean = model
            .measure(landmark, ue)
            .expect("scenario geometry is non-degenerate");
        let std_normal: DVector<f64> = DVector::from_iterator(
            MEAS_DIM,
            (0..MEAS_DIM).map(|_| {
                let u1: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
                let u2: f64 = rng.gen::<f64>();
                (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
            }),
        );
        let noisy = clean.as_vector() + &noise_factor * std_normal;
        out.push(Measurement::from_vector(&noisy));
    }
    let clutter_count = poisson_count(rng, sensor.clutter_rate);
    for _ in 0..clutter_count {
        let half_pi = std::f64::consts::FRAC_PI_2;
        let pi = std::f64::consts::PI;
        out.push(Measurement::new(
            rng.gen_range(0.0..sensor.toa_max),
            [rng.gen_range(-pi..pi), rng.gen_range(-half_pi..half_pi)],
            [rng.gen_range(-pi..pi), rng.gen_range(-half_pi..half_pi)],
        ));
    }
    // Fisher-Yates shuffle.
    for i in (1..out.len()).rev() {
        let j = rng.gen_range(0..=i);
        out.swap(i, j);
    }
    out
}

/// Per-step metric record of one run.
#[derive(Debug, Clone)]
pub struct StepRecord {
    pub step: usize,
    pub gospa_va: GospaResult,
    pub gospa_sp: GospaResult,
    pub pos_err: f64,
    pub heading_err_deg: f64,
    pub bias_err: f64,
    pub iplf_iters: f64,
    pub predict_ms: f64,
    pub update_ms: f64,
    pub step_ms: f64,
    pub ue_estimate: UEState,
    pub reported_std: [f64; 5],
}

#[derive(Debug, Clone)]
pub struct RunRecord {
    pub run: usize,
    pub seed: u64,
    pub steps: Vec<StepRecord>,
}

#[derive(Debug, Clone)]
pub struct MonteCarloResults {
    pub truth: GroundTruth,
    pub runs: Vec<RunRecord>,
    /// Failed runs as (run index, error description); never silently
    /// dropped.
    pub failures: Vec<(usize, String)>,
}

impl MonteCarloResults {
    pub fn ue_estimates(&self) -> Vec<Vec<UeStepEstimate>> {
        self.runs
            .iter()
            .map(|r| {
                r.steps
                    .iter()
                    .map(|s| UeStepEstimate {
                        mean: s.ue_estimate,
                        reported_std: s.reported_std,
                    })
                    .collect()
            })
            .collect()
    }
}

fn single_run(
    cfg: &ExperimentConfig,
    truth: &GroundTruth,
    linearizer: Linearizer,
    run: usize,
) -> Result<RunRecord> {
    let seed = cfg.scenario.seed.wrapping_add(run as u64);
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let model = MeasurementModel::new(Vector3::from(cfg.scenario.bs_position));
    let sensor = build_sensor(cfg);
    let motion = build_motion(cfg, false);
    let filter_cfg = build_filter_config(cfg, linearizer);
    let gospa_cfg = build_gospa_config(cfg);
    let truth_va = truth.positions_of(LandmarkKind::Va);
    let truth_sp = truth.positions_of(LandmarkKind::Sp);

    let mut state = initial_filter_state(cfg, truth, &mut rng);
    let mut steps = Vec::with_capacity(cfg.scenario.steps);
    for (k, ue_true) in truth.ue_states.iter().enumerate() {
        let measurements = simulate_measurements(truth, &model, ue_true, &sensor, &mut rng);
        let (next, diag) = step(&state, &measurements, &model, &sensor, &motion, &filter_cfg)?;
        state = next;

        let estimate = extract_map_estimate(&state.map, filter_cfg.extract_threshold);
        let ue_est = UEState::from_vector(&state.ue.mean);
        let reported_std = std::array::from_fn(|i| state.ue.cov[(i, i)].max(0.0).sqrt());
        steps.push(StepRecord {
            step: k + 1,
            gospa_va: gospa(&truth_va, &estimate.va, &gospa_cfg),
            gospa_sp: gospa(&truth_sp, &estimate.sp, &gospa_cfg),
            pos_err: (ue_est.position.xy() - ue_true.position.xy()).norm(),
            heading_err_deg: wrap_angle(ue_est.heading - ue_true.heading).abs()
                * 180.0
                / std::f64::consts::PI,
            bias_err: (ue_est.clock_bias - ue_true.clock_bias).abs(),
            iplf_iters: diag.mean_iterations,
            predict_ms: diag.predict_seconds * 1e3,
            update_ms: diag.update_seconds * 1e3,
            step_ms: (diag.predict_seconds + diag.update_seconds) * 1e3,
            ue_estimate: ue_est,
            reported_std,
        });
    }
    Ok(RunRecord { run, seed, steps })
}

/// Runs `runs` independent Monte Carlo repetitions of the scenario; run
/// `r` is seeded with `seed + r`. Runs execute concurrently, results are
/// ordered by run index, and failed runs are reported alongside the
/// successful ones.
pub fn run_monte_carlo(
    cfg: &ExperimentConfig,
    linearizer: Linearizer,
    runs: usize,
) -> Result<MonteCarloResults> {
    assert!(runs >= 1, "at least one run required");
    let truth = generate_scenario(cfg)?;
    let workers = std::thread::available_parallelism()
        .map(|n| n.get())
        .unwrap_or(1)
        .min(runs);
    let mut outcomes: Vec<Option<Result<RunRecord>>> = Vec::new();
    outcomes.resize_with(runs, || None);
    let next = std::sync::atomic::AtomicUsize::new(0);
    let outcomes_mutex = std::sync::Mutex::new(&mut outcomes);
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let run = next.fetch_add(1, std::sync::atomic::Ordering::Relaxed);
                if run >= runs {
                    break;
                }
                let outcome = single_run(cfg, &truth, linearizer, run);
                let mut guard = outcomes_mutex.lock().unwrap();
                guard[run] = Some(outcome);
            });
        }
    });

    let mut ok = Vec::new();
    let mut failures = Vec::new();
    for (run, outcome) in outcomes.into_iter().enumerate() {
        match outcome.expect("every run completed") {
            Ok(record) => ok.push(record),
            Err(e) => failures.push((run, e.to_string())),
        }
    }
    Ok(MonteCarloResults { truth, runs: ok, failures })
}

// ============================================================================
// CSV serialization and aggregation
// ============================================================================

pub const PER_STEP_HEADER: &str =
    "step,gospa_va,gospa_sp,pos_err,heading_err,bias_err,iplf_iters,step_ms";

/// Per-step CSV for one run, fixed column order, '.' decimal separator.
pub fn per_step_csv(run: &RunRecord) -> String {
    let mut out = String::from(PER_STEP_HEADER);
    out.push('\n');
    for s in &run.steps {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            s.step,
            s.gospa_va.total,
            s.gospa_sp.total,
            s.pos_err,
            s.heading_err_deg,
            s.bias_err,
            s.iplf_iters,
            s.step_ms
        ));
    }
    out
}

/// Mean and standard deviation of a sample.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Aggregate {
    pub mean: f64,
    pub std: f64,
}

pub fn aggregate(values: &[f64]) -> Aggregate {
    assert!(!values.is_empty(), "aggregate of an empty sample");
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    Aggregate { mean, std: var.max(0.0).sqrt() }
}

/// Cross-run per-step means, same column layout as the per-run files.
pub fn summary_csv(results: &MonteCarloResults) -> String {
    let mut out = String::from(PER_STEP_HEADER);
    out.push('\n');
    if results.runs.is_empty() {
        return out;
    }
    let steps = results.runs[0].steps.len();
    for k in 0..steps {
        let col = |f: &dyn Fn(&StepRecord) -> f64| -> f64 {
            aggregate(&results.runs.iter().map(|r| f(&r.steps[k])).collect::<Vec<_>>()).mean
        };
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            k + 1,
            col(&|s| s.gospa_va.total),
            col(&|s| s.gospa_sp.total),
            col(&|s| s.pos_err),
            col(&|s| s.heading_err_deg),
            col(&|s| s.bias_err),
            col(&|s| s.iplf_iters),
            col(&|s| s.step_ms),
        ));
    }
    out
}

/// Whole-experiment aggregates for one filter variant.
#[derive(Debug, Clone)]
pub struct OverallSummary {
    pub runs: usize,
    pub steps: usize,
    pub pos_rmse: f64,
    pub heading_rmse_deg: f64,
    pub bias_rmse: f64,
    pub reported_std: [f64; 4],
    pub empirical_std: [f64; 4],
    pub mean_iplf_iters: f64,
    pub mean_predict_ms: f64,
    pub mean_update_ms: f64,
    pub mean_step_ms: f64,
    pub final10_gospa_va: f64,
    pub final10_gospa_sp: f64,
}

pub fn overall_summary(results: &MonteCarloResults) -> Result<OverallSummary> {
    if results.runs.is_empty() {
        return Err(Error::NoFeasibleHypothesis);
    }
    let ue = crate::metrics::ue_error_summary(&results.ue_estimates(), &results.truth.ue_states)?;
    let steps = results.runs[0].steps.len();
    let collect = |f: &dyn Fn(&StepRecord) -> f64| -> Vec<f64> {
        results
            .runs
            .iter()
            .flat_map(|r| r.steps.iter().map(f))
            .collect()
    };
    let tail = steps.saturating_sub(10);
    let tail_vals = |f: &dyn Fn(&StepRecord) -> f64| -> Vec<f64> {
        results
            .runs
            .iter()
            .flat_map(|r| r.steps[tail..].iter().map(f))
            .collect()
    };
    Ok(OverallSummary {
        runs: results.runs.len(),
        steps,
        pos_rmse: ue.pos_rmse,
        heading_rmse_deg: ue.heading_rmse_deg,
        bias_rmse: ue.bias_rmse,
        reported_std: ue.reported_std,
        empirical_std: ue.empirical_std,
        mean_iplf_iters: aggregate(&collect(&|s| s.iplf_iters)).mean,
        mean_predict_ms: aggregate(&collect(&|s| s.predict_ms)).mean,
        mean_update_ms: aggregate(&collect(&|s| s.update_ms)).mean,
        mean_step_ms: aggregate(&collect(&|s| s.step_ms)).mean,
        final10_gospa_va: aggregate(&tail_vals(&|s| s.gospa_va.total)).mean,
        final10_gospa_sp: aggregate(&tail_vals(&|s| s.gospa_sp.total)).mean,
    })
}

pub const OVERALL_HEADER: &str = "runs,steps,pos_rmse,heading_rmse_deg,bias_rmse,\
reported_std_x,reported_std_y,reported_std_heading_deg,reported_std_bias,\
empirical_std_x,empirical_std_y,empirical_std_heading_deg,empirical_std_bias,\
mean_iplf_iters,mean_predict_ms,mean_update_ms,mean_step_ms,\
final10_gospa_va,final10_gospa_sp";

pub fn overall_csv(summary: &OverallSummary) -> String {
    let s = summary;
    format!(
        "{}\n{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}\n",
        OVERALL_HEADER,
        s.runs,
        s.steps,
        s.pos_rmse,
        s.heading_rmse_deg,
        s.bias_rmse,
        s.reported_std[0],
        s.reported_std[1],
        s.reported_std[2],
        s.reported_std[3],
        s.empirical_std[0],
        s.empirical_std[1],
        s.empirical_std[2],
        s.empirical_std[3],
        s.mean_iplf_iters,
        s.mean_predict_ms,
        s.mean_update_ms,
        s.mean_step_ms,
        s.final10_gospa_va,
        s.final10_gospa_sp
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_cfg() -> ExperimentConfig {
        let mut cfg = ExperimentConfig::default();
        cfg.scenario.steps = 3;
        cfg
    }

    #[test]
    fn mirror_plane_formula() {
        let va = mirror_across_plane(&Vector3::zeros(), &Vector3::new(1.0, 0.0, 0.0), 5.0);
        assert_eq!(va, Vector3::new(10.0, 0.0, 0.0));
    }

    #[test]
    fn scenario_default_landmark_layout() {
        let truth = generate_scenario(&ExperimentConfig::default()).unwrap();
        let vas = truth.positions_of(LandmarkKind::Va);
        assert_eq!(vas.len(), 4);
        assert_eq!(vas[0], Vector3::new(16.0, 0.0, 3.0));
        assert_eq!(vas[1], Vector3::new(-16.0, 0.0, 3.0));
        assert_eq!(vas[2], Vector3::new(0.0, 16.0, 3.0));
        assert_eq!(vas[3], Vector3::new(0.0, -16.0, 3.0));
        assert_eq!(truth.positions_of(LandmarkKind::Sp).len(), 4);
    }

    #[test]
    fn trajectory_closes_full_circle() {
        // Default: 40 steps of 0.5 s at 2 pi / 20 rad/s close the loop.
        let cfg = ExperimentConfig::default();
        let truth = generate_scenario(&cfg).unwrap();
        let last = truth.ue_states.last().unwrap();
        assert!((last.position - truth.initial.position).norm() < 1e-6);
        assert!(wrap_angle(last.heading - truth.initial.heading).abs() < 1e-9);
    }

    #[test]
    fn zero_speed_stays_put() {
        let mut cfg = small_cfg();
        cfg.trajectory.speed = 0.0;
        cfg.trajectory.turn_rate = 0.0;
        let truth = generate_scenario(&cfg).unwrap();
        for s in &truth.ue_states {
            assert_eq!(s.position, truth.initial.position);
        }
    }

    #[test]
    fn ground_truth_va_measurement_matches_mirror_path() {
        let cfg = ExperimentConfig::default();
        let truth = generate_scenario(&cfg).unwrap();
        let model = MeasurementModel::new(Vector3::from(cfg.scenario.bs_position));
        let ue = truth.ue_states[5];
        for (plane, va) in cfg.scenario.va_planes.iter().zip(truth.positions_of(LandmarkKind::Va))
        {
            let z = model
                .measure(&Landmark::new(va, LandmarkKind::Va), &ue)
                .unwrap();
            // Path length via the image point equals bs->q->ue through the wall.
            let bs = Vector3::from(cfg.scenario.bs_position);
            let image = mirror_across_plane(&bs, &Vector3::from(plane.normal), plane.offset);
            let expected = (image - ue.position).norm() + ue.clock_bias;
            assert!((z.toa - expected).abs() < 1e-9);
        }
    }

    #[test]
    fn noiseless_full_detection_yields_all_in_fov() {
        let mut cfg = small_cfg();
        cfg.sensor.detection_prob = 1.0;
        cfg.sensor.clutter_rate = 0.0;
        cfg.sensor.toa_std = 1e-12;
        cfg.sensor.angle_std = 1e-12;
        let truth = generate_scenario(&cfg).unwrap();
        let model = MeasurementModel::new(Vector3::from(cfg.scenario.bs_position));
        let sensor = build_sensor(&cfg);
        let ue = truth.ue_states[0];
        let mut rng = ChaCha12Rng::seed_from_u64(0);
        let z = simulate_measurements(&truth, &model, &ue, &sensor, &mut rng);
        let expected = 1 + truth
            .landmarks
            .iter()
            .filter(|l| in_fov(l, &ue, &sensor))
            .count();
        assert_eq!(z.len(), expected);
    }

    #[test]
    fn zero_detection_zero_clutter_is_empty() {
        let mut cfg = small_cfg();
        cfg.sensor.detection_prob = 0.0;
        cfg.sensor.clutter_rate = 0.0;
        let truth = generate_scenario(&cfg).unwrap();
        let model = MeasurementModel::new(Vector3::from(cfg.scenario.bs_position));
        let sensor = build_sensor(&cfg);
        let mut rng = ChaCha12Rng::seed_from_u64(0);
        let z = simulate_measurements(&truth, &model, &truth.ue_states[0], &sensor, &mut rng);
        assert!(z.is_empty());
    }

    #[test]
    fn detection_and_clutter_statistics() {
        let mut cfg = small_cfg();
        cfg.sensor.clutter_rate = 0.0;
        let truth = generate_scenario(&cfg).unwrap();
        let model = MeasurementModel::new(Vector3::from(cfg.scenario.bs_position));
        let sensor = build_sensor(&cfg);
        let ue = truth.ue_states[0];
        let visible = 1 + truth
            .landmarks
            .iter()
            .filter(|l| in_fov(l, &ue, &sensor))
            .count();
        let mut rng = ChaCha12Rng::seed_from_u64(123);
        let scans = 10_000usize;
        let mut detections = 0usize;
        for _ in 0..scans {
            detections += simulate_measurements(&truth, &model, &ue, &sensor, &mut rng).len();
        }
        let rate = detections as f64 / (scans * visible) as f64;
        assert!((rate - cfg.sensor.detection_prob).abs() < 0.01, "rate {rate}");

        // Clutter-only statistics.
        cfg.sensor.detection_prob = 0.0;
        cfg.sensor.clutter_rate = 1.0;
        let sensor = build_sensor(&cfg);
        let mut clutter = 0usize;
        for _ in 0..scans {
            clutter += simulate_measurements(&truth, &model, &ue, &sensor, &mut rng).len();
        }
        let mean = clutter as f64 / scans as f64;
        assert!((mean - 1.0).abs() < 0.05, "clutter mean {mean}");
    }

    #[test]
    fn monte_carlo_is_reproducible() {
        let cfg = small_cfg();
        let a = run_monte_carlo(&cfg, Linearizer::Posterior, 1).unwrap();
        let b = run_monte_carlo(&cfg, Linearizer::Posterior, 1).unwrap();
        assert!(a.failures.is_empty());
        // Identical estimates byte for byte; timings are excluded from
        // the comparison because wall clocks differ between repetitions.
        for (ra, rb) in a.runs.iter().zip(&b.runs) {
            for (sa, sb) in ra.steps.iter().zip(&rb.steps) {
                assert_eq!(sa.ue_estimate, sb.ue_estimate);
                assert_eq!(sa.gospa_va.total, sb.gospa_va.total);
                assert_eq!(sa.gospa_sp.total, sb.gospa_sp.total);
                assert_eq!(sa.reported_std, sb.reported_std);
            }
        }
    }

    #[test]
    fn monte_carlo_runs_differ_across_seeds() {
        let cfg = small_cfg();
        let results = run_monte_carlo(&cfg, Linearizer::Posterior, 2).unwrap();
        assert_eq!(results.runs.len(), 2);
        assert_ne!(results.runs[0].seed, results.runs[1].seed);
        let a = &results.runs[0].steps[0];
        let b = &results.runs[1].steps[0];
        assert_ne!(a.ue_estimate, b.ue_estimate);
    }

    #[test]
    fn aggregate_of_constants() {
        let agg = aggregate(&[2.5, 2.5, 2.5]);
        assert_eq!(agg.mean, 2.5);
        assert_eq!(agg.std, 0.0);
    }

    #[test]
    fn per_step_csv_shape() {
        let cfg = small_cfg();
        let results = run_monte_carlo(&cfg, Linearizer::Prior, 1).unwrap();
        let csv = per_step_csv(&results.runs[0]);
        let lines: Vec<&str> = csv.trim_end().lines().collect();
        assert_eq!(lines[0], PER_STEP_HEADER);
        assert_eq!(lines.len(), 1 + cfg.scenario.steps);
        // EK rows report one linearization pass per update.
        for line in &lines[1..] {
            let fields: Vec<&str> = line.split(',').collect();
            assert_eq!(fields.len(), 8);
            assert_eq!(fields[6], "1");
        }
    }
}
