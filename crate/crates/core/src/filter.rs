//! The per-step SLAM recursion.
//!
//! One step runs: UE prediction through the motion model, association
//! cost-matrix construction (with cached per-pair regression statistics),
//! k-best hypothesis enumeration, a joint UE/landmark update per
//! hypothesis using the configured linearizer, weight-normalized fusion
//! of the UE posteriors, and reduction of the hypothesis mixture back to
//! a single PMB map followed by pruning.
//!
//! The known BS is a fixed, always-existing landmark outside the
//! Bernoulli list: measurements associated with it update only the UE
//! state. UE-landmark cross-correlations are dropped when the joint
//! posterior is split back into marginals.

use nalgebra::{DMatrix, DVector};
use std::sync::Arc;
use std::time::Instant;

use crate::assignment::{murty_kbest, CostMatrix};
use crate::error::{Error, Result};
use crate::gaussian::{
    ensure_psd, log_pdf_residual, marginalize, moment_match, GaussianDensity,
};
use crate::geometry::{
    in_fov, wrap_angle, Landmark, LandmarkKind, Measurement, MeasurementModel, SensorModel,
    UEState, LM_DIM, MEAS_DIM, UE_DIM,
};
use crate::linearization::{
    ekf_linearize_wrapped, iplf, kf_update, propagate_moments, slr_wrapped, AffineApprox,
    IplfOptions,
};
use crate::pmb::{
    birth_bernoulli, misdetection_update, pmbm_to_pmb, predict_map, prune, AssociationTarget,
    BernoulliComponent, BernoulliId, BirthOutcome, GlobalHypothesis, PmbMap,
};

/// Denominator floor for the misdetection ratio in cost entries; keeps the
/// assignment finite when `r * p_d` reaches one. Hypothesis weights are
/// recomputed exactly, so the floor never leaks into the posterior.
const MISS_RATIO_FLOOR: f64 = 1e-12;

/// Joint filter state: UE marginal, map marginal, time index.
#[derive(Debug, Clone)]
pub struct FilterState {
    pub ue: GaussianDensity,
    pub map: PmbMap,
    pub step: usize,
}

impl FilterState {
    pub fn new(ue: GaussianDensity, map: PmbMap) -> Self {
        assert_eq!(ue.dim(), UE_DIM, "UE state is 5-dimensional");
        Self { ue, map, step: 0 }
    }
}

/// A state-transition function shared across threads.
pub type TransitionFn = Arc<dyn Fn(&DVector<f64>) -> DVector<f64> + Send + Sync>;

/// UE transition model: a nonlinear transition function, its process
/// noise, and circular flags for the output components.
#[derive(Clone)]
pub struct MotionModel {
    pub transition: TransitionFn,
    pub process_noise: DMatrix<f64>,
    pub circular_out: Vec<bool>,
}

impl std::fmt::Debug for MotionModel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("MotionModel")
            .field("process_noise", &self.process_noise)
            .finish_non_exhaustive()
    }
}

impl MotionModel {
    pub fn new(
        transition: impl Fn(&DVector<f64>) -> DVector<f64> + Send + Sync + 'static,
        process_noise: DMatrix<f64>,
        circular_out: Vec<bool>,
    ) -> Self {
        Self { transition: Arc::new(transition), process_noise, circular_out }
    }

    /// Planar constant-turn-rate motion: the position advances along a
    /// circular arc at fixed speed, the heading advances by
    /// `turn_rate * dt`, height and clock bias are random walks.
    pub fn constant_turn(speed: f64, turn_rate: f64, dt: f64, process_noise: DMatrix<f64>) -> Self {
        assert_eq!(process_noise.nrows(), UE_DIM);
        let f = move |s: &DVector<f64>| {
            let heading = s[3];
            let (x, y) = if turn_rate.abs() < 1e-9 {
                (s[0] + speed * dt * heading.cos(), s[1] + speed * dt * heading.sin())
            } else {
                (
                    s[0] + speed / turn_rate * ((heading + turn_rate * dt).sin() - heading.sin()),
                    s[1] - speed / turn_rate * ((heading + turn_rate * dt).cos() - heading.cos()),
                )
            };
            DVector::from_row_slice(&[x, y, s[2], heading + turn_rate * dt, s[4]])
        };
        Self::new(f, process_noise, vec![false, false, false, true, false])
    }

    /// Affine transition `s -> A s + c`.
    pub fn affine(a: DMatrix<f64>, c: DVector<f64>, process_noise: DMatrix<f64>) -> Self {
        let dim = a.nrows();
        Self::new(
            move |s: &DVector<f64>| &a * s + &c,
            process_noise,
            vec![false; dim],
        )
    }
}

/// Which linearization drives the per-hypothesis joint update.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Linearizer {
    /// First-order Taylor at the prior mean (the EK route).
    Prior,
    /// Iterated statistical linear regression at the posterior (IPL).
    Posterior,
}

/// Filter configuration.
#[derive(Debug, Clone)]
pub struct FilterConfig {
    /// Number of data-association hypotheses kept per step.
    pub gamma: usize,
    pub linearizer: Linearizer,
    pub iplf: IplfOptions,
    /// Squared-Mahalanobis association gate.
    pub gate: f64,
    pub prune_r_min: f64,
    pub prune_kind_w_min: f64,
    pub merge_dist: f64,
    /// Existence threshold for map extraction.
    pub extract_threshold: f64,
}

impl Default for FilterConfig {
    fn default() -> Self {
        Self {
            gamma: 10,
            linearizer: Linearizer::Posterior,
            iplf: IplfOptions::default(),
            gate: 40.0,
            prune_r_min: 1e-3,
            prune_kind_w_min: 1e-2,
            merge_dist: 2.0,
            extract_threshold: 0.5,
        }
    }
}

/// Propagates the UE density through the motion model: cubature moments
/// of the transition plus the process noise. Exact for affine motion.
pub fn predict_ue(ue: &GaussianDensity, motion: &MotionModel) -> Result<GaussianDensity> {
    let transition = Arc::clone(&motion.transition);
    let stats = propagate_moments(
        &move |s: &DVector<f64>| Ok(transition(s)),
        ue,
        &motion.circular_out,
    )?;
    let mut mean = stats.z_pred;
    for (k, circ) in motion.circular_out.iter().enumerate() {
        if *circ {
            mean[k] = wrap_angle(mean[k]);
        }
    }
    let cov = ensure_psd(&(&stats.s_zz + &motion.process_noise), 0.0);
    Ok(GaussianDensity { mean, cov })
}

// ============================================================================
// Association context
// ============================================================================

/// Cached regression of one (UE, landmark-kind) pair against the forward
/// model, reused for gating, likelihoods and the non-MAP kind updates.
#[derive(Debug, Clone)]
struct PairCache {
    joint_prior: GaussianDensity,
    approx: AffineApprox,
    z_pred: DVector<f64>,
    /// Predicted innovation covariance including measurement noise.
    innovation_cov: DMatrix<f64>,
}

#[derive(Debug, Clone)]
struct BernoulliCache {
    /// Kind-averaged effective detection probability (zero outside FoV).
    p_eff: f64,
    kinds: Vec<(LandmarkKind, f64, PairCache)>,
}

/// Cost matrix plus the per-pair sufficient statistics backing it.
#[derive(Debug)]
pub struct AssociationContext {
    pub cost: CostMatrix,
    bernoullis: Vec<BernoulliCache>,
    births: Vec<BirthOutcome>,
    /// Per-measurement BS log-likelihood.
    bs_log_lik: Vec<f64>,
    /// Per (measurement, bernoulli, kind) log-likelihood.
    pair_log_lik: Vec<Vec<Vec<f64>>>,
}

fn block_joint(ue: &GaussianDensity, landmark: &GaussianDensity) -> GaussianDensity {
    let n = ue.dim() + landmark.dim();
    let mut mean = DVector::zeros(n);
    mean.rows_mut(0, ue.dim()).copy_from(&ue.mean);
    mean.rows_mut(ue.dim(), landmark.dim()).copy_from(&landmark.mean);
    let mut cov = DMatrix::zeros(n, n);
    cov.view_mut((0, 0), (ue.dim(), ue.dim())).copy_from(&ue.cov);
    cov.view_mut((ue.dim(), ue.dim()), (landmark.dim(), landmark.dim()))
        .copy_from(&landmark.cov);
    GaussianDensity { mean, cov }
}

fn wrapped_residual(z: &DVector<f64>, pred: &DVector<f64>, circular: &[bool]) -> DVector<f64> {
    let mut residual = z - pred;
    for (k, circ) in circular.iter().enumerate() {
        if *circ {
            residual[k] = wrap_angle(residual[k]);
        }
    }
    residual
}

fn pair_cache(
    model: &MeasurementModel,
    ue: &GaussianDensity,
    kind: LandmarkKind,
    landmark_density: Option<&GaussianDensity>,
    noise: &DMatrix<f64>,
) -> Result<PairCache> {
    let joint_prior = match landmark_density {
        Some(lm) => block_joint(ue, lm),
        None => ue.clone(),
    };
    let stacked = model.stacked_fn(&[kind]);
    let mask = stacked.circular_mask();
    let eval = |s: &DVector<f64>| stacked.eval(s);
    let (approx, stats) = slr_wrapped(&eval, &joint_prior, &mask)?;
    Ok(PairCache {
        joint_prior,
        innovation_cov: &stats.s_zz + noise,
        z_pred: stats.z_pred,
        approx,
    })
}

/// Gated log-likelihood of a measurement under a pair's predicted
/// measurement density; `None` when outside the squared-Mahalanobis gate.
fn gated_log_lik(z: &Measurement, cache: &PairCache, gate: f64) -> Option<f64> {
    let mask = Measurement::circular_mask();
    let residual = wrapped_residual(&z.as_vector(), &cache.z_pred, &mask);
    let chol = nalgebra::Cholesky::new(cache.innovation_cov.clone())?;
    let maha_sq = residual.dot(&chol.solve(&residual));
    if maha_sq > gate {
        return None;
    }
    log_pdf_residual(&residual, &cache.innovation_cov).ok()
}

fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b));
    if !max.is_finite() {
        return max;
    }
    max + values.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

/// Builds the association cost matrix for one scan.
///
/// Rows are measurements; columns are the BS, each Bernoulli, then one
/// new/clutter column per measurement. Detection entries hold the
/// negative log ratio of the association likelihood to the misdetection
/// weight; missed detections enter the hypothesis weights outside the
/// matrix.
pub fn build_cost_matrix(
    model: &MeasurementModel,
    ue_pred: &GaussianDensity,
    map: &PmbMap,
    measurements: &[Measurement],
    sensor: &SensorModel,
    config: &FilterConfig,
    step: usize,
) -> Result<AssociationContext> {
    let n_z = measurements.len();
    let n_b = map.bernoullis.len();
    let ue_state = UEState::from_vector(&ue_pred.mean);

    let bs = pair_cache(model, ue_pred, LandmarkKind::Bs, None, &sensor.noise_cov)?;

    let mut bernoullis = Vec::with_capacity(n_b);
    for b in &map.bernoullis {
        let mut kinds = Vec::with_capacity(b.kinds.len());
        let mut p_eff = 0.0;
        for kc in &b.kinds {
            let mean = &kc.density.mean;
            let lm = Landmark::new(
                nalgebra::Vector3::new(mean[0], mean[1], mean[2]),
                kc.kind,
            );
            if in_fov(&lm, &ue_state, sensor) {
                p_eff += kc.weight * sensor.detection_prob;
            }
            let cache = pair_cache(model, ue_pred, kc.kind, Some(&kc.density), &sensor.noise_cov)?;
            kinds.push((kc.kind, kc.weight, cache));
        }
        bernoullis.push(BernoulliCache { p_eff, kinds });
    }

    let mut births = Vec::with_capacity(n_z);
    for (j, z) in measurements.iter().enumerate() {
        births.push(birth_bernoulli(
            model,
            z,
            ue_pred,
            &map.ppp,
            sensor,
            BernoulliId::birth(step, j),
        ));
    }

    let mut cost = CostMatrix::filled(n_z, 1 + n_b + n_z, f64::INFINITY);
    let mut bs_log_lik = vec![f64::NEG_INFINITY; n_z];
    let mut pair_log_lik = vec![vec![Vec::new(); n_b]; n_z];
    for (j, z) in measurements.iter().enumerate() {
        // Base station column.
        if sensor.detection_prob > 0.0 {
            if let Some(ll) = gated_log_lik(z, &bs, config.gate) {
                bs_log_lik[j] = ll;
                let num = sensor.detection_prob.ln() + ll;
                let den = (1.0 - sensor.detection_prob).max(MISS_RATIO_FLOOR).ln();
                cost.set(j, 0, -(num - den));
            }
        }
        // Bernoulli columns, kind-marginalized.
        for (i, bc) in bernoullis.iter().enumerate() {
            let r = map.bernoullis[i].existence;
            let mut terms = Vec::with_capacity(bc.kinds.len());
            for (_, weight, cache) in &bc.kinds {
                match gated_log_lik(z, cache, config.gate) {
                    Some(ll) => {
                        terms.push(weight.ln() + ll);
                        pair_log_lik[j][i].push(ll);
                    }
                    None => pair_log_lik[j][i].push(f64::NEG_INFINITY),
                }
            }
            let marginal = log_sum_exp(&terms);
            if r > 0.0 && bc.p_eff > 0.0 && marginal.is_finite() {
                let num = r.ln() + bc.p_eff.ln() + marginal;
                let den = (1.0 - r * bc.p_eff).max(MISS_RATIO_FLOOR).ln();
                cost.set(j, 1 + i, -(num - den));
            }
        }
        // Own new/clutter column.
        cost.set(j, 1 + n_b + j, -births[j].log_weight());
    }

    Ok(AssociationContext { cost, bernoullis, births, bs_log_lik, pair_log_lik })
}

// ============================================================================
// Per-hypothesis update
// ============================================================================

/// Joint measurement update through the configured linearizer; returns
/// the posterior and the number of linearization iterations performed.
pub fn linearized_update<F>(
    linearizer: Linearizer,
    f: &F,
    circular: &[bool],
    prior: &GaussianDensity,
    z: &DVector<f64>,
    r: &DMatrix<f64>,
    opts: &IplfOptions,
) -> Result<(GaussianDensity, usize)>
where
    F: Fn(&DVector<f64>) -> Result<DVector<f64>>,
{
    match linearizer {
        Linearizer::Posterior => iplf(f, prior, z, r, circular, opts),
        Linearizer::Prior => {
            let approx = ekf_linearize_wrapped(f, prior, circular)?;
            Ok((kf_update(prior, &approx, z, r, circular)?, 1))
        }
    }
}

/// Posterior of one data-association hypothesis.
#[derive(Debug, Clone)]
pub struct HypothesisUpdate {
    pub ue: GaussianDensity,
    pub bernoullis: Vec<BernoulliComponent>,
    pub log_weight: f64,
    pub hypothesis: GlobalHypothesis,
    /// Linearization iterations of the joint update (1 for the EK route,
    /// 0 when the hypothesis had no associated measurement).
    pub iterations: usize,
}

/// Applies one global hypothesis: joint update of the UE with every
/// associated landmark (at its MAP kind), misdetection updates for the
/// rest, births for new/clutter assignments, and the exact hypothesis
/// log-weight.
#[allow(clippy::too_many_arguments)]
pub fn update_hypothesis(
    model: &MeasurementModel,
    ue_pred: &GaussianDensity,
    map: &PmbMap,
    measurements: &[Measurement],
    row_to_col: &[usize],
    ctx: &AssociationContext,
    sensor: &SensorModel,
    config: &FilterConfig,
) -> Result<HypothesisUpdate> {
    let n_b = map.bernoullis.len();
    let n_z = measurements.len();
    assert_eq!(row_to_col.len(), n_z);

    let mut targets = Vec::with_capacity(n_z);
    let mut detected: Vec<Option<usize>> = vec![None; n_b];
    let mut bs_meas: Option<usize> = None;
    for (j, &col) in row_to_col.iter().enumerate() {
        if col == 0 {
            targets.push(AssociationTarget::Bs);
            bs_meas = Some(j);
        } else if col <= n_b {
            targets.push(AssociationTarget::Bernoulli(map.bernoullis[col - 1].id));
            detected[col - 1] = Some(j);
        } else {
            assert_eq!(col, 1 + n_b + j, "measurement bound to a foreign clutter column");
            targets.push(AssociationTarget::NewOrClutter);
        }
    }

    // Stack the joint state: UE then each detected Bernoulli's MAP kind,
    // ordered by measurement index for determinism.
    let mut stack: Vec<(usize, Option<usize>)> = Vec::new(); // (meas j, bernoulli idx)
    for (j, target) in targets.iter().enumerate() {
        match target {
            AssociationTarget::Bs => stack.push((j, None)),
            AssociationTarget::Bernoulli(_) => stack.push((j, Some(row_to_col[j] - 1))),
            AssociationTarget::NewOrClutter => {}
        }
    }
    stack.sort_by_key(|(j, _)| *j);

    let mut log_weight = 0.0;
    let mut iterations = 0usize;
    let mut ue_post = ue_pred.clone();
    let mut landmark_posts: Vec<(usize, GaussianDensity)> = Vec::new();

    if !stack.is_empty() {
        let mut kinds = Vec::with_capacity(stack.len());
        let mut joint_dim = UE_DIM;
        for (_, bern) in &stack {
            match bern {
                None => kinds.push(LandmarkKind::Bs),
                Some(i) => {
                    kinds.push(map.bernoullis[*i].map_kind().kind);
                    joint_dim += LM_DIM;
                }
            }
        }
        let mut joint_mean = DVector::zeros(joint_dim);
        let mut joint_cov = DMatrix::zeros(joint_dim, joint_dim);
        joint_mean.rows_mut(0, UE_DIM).copy_from(&ue_pred.mean);
        joint_cov.view_mut((0, 0), (UE_DIM, UE_DIM)).copy_from(&ue_pred.cov);
        let mut offset = UE_DIM;
        let mut slots: Vec<(usize, usize)> = Vec::new(); // (bernoulli idx, offset)
        for (_, bern) in &stack {
            if let Some(i) = bern {
                let density = &map.bernoullis[*i].map_kind().density;
                joint_mean.rows_mut(offset, LM_DIM).copy_from(&density.mean);
                joint_cov
                    .view_mut((offset, offset), (LM_DIM, LM_DIM))
                    .copy_from(&density.cov);
                slots.push((*i, offset));
                offset += LM_DIM;
            }
        }
        let joint_prior = GaussianDensity::new(joint_mean, joint_cov);

        let mut z_stacked = DVector::zeros(MEAS_DIM * stack.len());
        let mut noise = DMatrix::zeros(MEAS_DIM * stack.len(), MEAS_DIM * stack.len());
        for (slot, (j, _)) in stack.iter().enumerate() {
            z_stacked
                .rows_mut(slot * MEAS_DIM, MEAS_DIM)
                .copy_from(&measurements[*j].as_vector());
            noise
                .view_mut((slot * MEAS_DIM, slot * MEAS_DIM), (MEAS_DIM, MEAS_DIM))
                .copy_from(&sensor.noise_cov);
        }

        let stacked = model.stacked_fn(&kinds);
        let mask = stacked.circular_mask();
        let eval = |s: &DVector<f64>| stacked.eval(s);
        let (joint_post, iters) = linearized_update(
            config.linearizer,
            &eval,
            &mask,
            &joint_prior,
            &z_stacked,
            &noise,
            &config.iplf,
        )?;
        iterations = iters;

        ue_post = marginalize(&joint_post, 0..UE_DIM)?;
        ue_post.mean[3] = wrap_angle(ue_post.mean[3]);
        for (i, offset) in slots {
            landmark_posts.push((i, marginalize(&joint_post, offset..offset + LM_DIM)?));
        }
    }

    // Hypothesis weight: detections, misdetections, clutter/birth columns.
    if let Some(j) = bs_meas {
        log_weight += sensor.detection_prob.ln() + ctx.bs_log_lik[j];
    } else {
        log_weight += (1.0 - sensor.detection_prob).max(MISS_RATIO_FLOOR).ln();
    }
    for (i, bern) in map.bernoullis.iter().enumerate() {
        let cache = &ctx.bernoullis[i];
        match detected[i] {
            Some(j) => {
                let terms: Vec<f64> = cache
                    .kinds
                    .iter()
                    .zip(&ctx.pair_log_lik[j][i])
                    .map(|((_, w, _), ll)| w.ln() + ll)
                    .collect();
                let marginal = log_sum_exp(&terms);
                if !marginal.is_finite() || bern.existence <= 0.0 || cache.p_eff <= 0.0 {
                    return Err(Error::NoFeasibleHypothesis);
                }
                log_weight += bern.existence.ln() + cache.p_eff.ln() + marginal;
            }
            None => {
                log_weight +=
                    (1.0 - bern.existence * cache.p_eff).max(MISS_RATIO_FLOOR).ln();
            }
        }
    }
    for (j, target) in targets.iter().enumerate() {
        if *target == AssociationTarget::NewOrClutter {
            log_weight += ctx.births[j].log_weight();
        }
    }

    // Assemble the posterior Bernoulli set in map order, births appended.
    let mut bernoullis = Vec::with_capacity(n_b + n_z);
    for (i, bern) in map.bernoullis.iter().enumerate() {
        match detected[i] {
            Some(j) => {
                let mut updated = bern.clone();
                updated.existence = 1.0;
                // Kind weights follow the per-kind association likelihoods.
                let cache = &ctx.bernoullis[i];
                let joint_map_density = landmark_posts
                    .iter()
                    .find(|(idx, _)| *idx == i)
                    .map(|(_, d)| d.clone())
                    .expect("detected bernoulli has a joint posterior");
                let map_kind = bern.map_kind().kind;
                // Kind weights in log space: prior weight times the
                // per-kind association likelihood.
                let log_kind_weights: Vec<f64> = updated
                    .kinds
                    .iter()
                    .map(|kc| {
                        let slot =
                            cache.kinds.iter().position(|(k, _, _)| *k == kc.kind).unwrap();
                        kc.weight.ln() + ctx.pair_log_lik[j][i][slot]
                    })
                    .collect();
                let max_log = log_kind_weights.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b));
                for (kc, lw) in updated.kinds.iter_mut().zip(&log_kind_weights) {
                    kc.weight = (lw - max_log).exp();
                    if kc.kind == map_kind {
                        kc.density = joint_map_density.clone();
                    } else {
                        // Non-MAP kinds update through their cached pair
                        // regression in one shot.
                        let slot =
                            cache.kinds.iter().position(|(k, _, _)| *k == kc.kind).unwrap();
                        let pair = &cache.kinds[slot].2;
                        let posterior = kf_update(
                            &pair.joint_prior,
                            &pair.approx,
                            &measurements[j].as_vector(),
                            &sensor.noise_cov,
                            &Measurement::circular_mask(),
                        )?;
                        kc.density = marginalize(&posterior, UE_DIM..UE_DIM + LM_DIM)?;
                    }
                }
                updated.normalize_kinds();
                bernoullis.push(updated);
            }
            None => {
                let (updated, _) = misdetection_update(bern, ctx.bernoullis[i].p_eff);
                bernoullis.push(updated);
            }
        }
    }
    for (j, target) in targets.iter().enumerate() {
        if *target == AssociationTarget::NewOrClutter {
            if let Some(newborn) = &ctx.births[j].bernoulli {
                bernoullis.push(newborn.clone());
            }
        }
    }

    let hypothesis = GlobalHypothesis {
        weight: 0.0, // normalized by the caller
        assignment: targets,
        detected_flags: detected.iter().map(|d| d.is_some()).collect(),
    };
    Ok(HypothesisUpdate { ue: ue_post, bernoullis, log_weight, hypothesis, iterations })
}

// ============================================================================
// Full step
// ============================================================================

/// Diagnostics of one filter step.
#[derive(Debug, Clone, Copy)]
pub struct StepDiagnostics {
    pub hypotheses_evaluated: usize,
    pub hypotheses_dropped: usize,
    /// Mean linearization iterations across hypothesis updates (1.0 when
    /// nothing was linearized this step).
    pub mean_iterations: f64,
    pub predict_seconds: f64,
    pub update_seconds: f64,
}

/// Runs one full prediction/update cycle.
pub fn step(
    state: &FilterState,
    measurements: &[Measurement],
    model: &MeasurementModel,
    sensor: &SensorModel,
    motion: &MotionModel,
    config: &FilterConfig,
) -> Result<(FilterState, StepDiagnostics)> {
    let t0 = Instant::now();
    let ue_pred = predict_ue(&state.ue, motion)?;
    let predict_seconds = t0.elapsed().as_secs_f64();

    let t1 = Instant::now();
    let map_pred = predict_map(state.map.clone());
    let ctx = build_cost_matrix(
        model,
        &ue_pred,
        &map_pred,
        measurements,
        sensor,
        config,
        state.step,
    )?;
    let assignments = murty_kbest(&ctx.cost, config.gamma)?;

    let mut updates: Vec<HypothesisUpdate> = Vec::with_capacity(assignments.len());
    let mut dropped = 0usize;
    for assignment in &assignments {
        match update_hypothesis(
            model,
            &ue_pred,
            &map_pred,
            measurements,
            &assignment.row_to_col,
            &ctx,
            sensor,
            config,
        ) {
            Ok(update) => updates.push(update),
            Err(_) => dropped += 1,
        }
    }
    if updates.is_empty() {
        return Err(Error::NoFeasibleHypothesis);
    }

    // Normalize hypothesis weights.
    let log_weights: Vec<f64> = updates.iter().map(|u| u.log_weight).collect();
    let lse = log_sum_exp(&log_weights);
    if !lse.is_finite() {
        return Err(Error::NoFeasibleHypothesis);
    }
    let weights: Vec<f64> = log_weights.iter().map(|lw| (lw - lse).exp()).collect();

    // Fuse the UE posterior across hypotheses, re-centering the circular
    // heading around the dominant hypothesis first.
    let best = weights
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .map(|(i, _)| i)
        .unwrap();
    let reference_heading = updates[best].ue.mean[3];
    let ue_components: Vec<GaussianDensity> = updates
        .iter()
        .map(|u| {
            let mut d = u.ue.clone();
            d.mean[3] = reference_heading + wrap_angle(d.mean[3] - reference_heading);
            d
        })
        .collect();
    let mut ue_post = moment_match(&weights, &ue_components)?;
    ue_post.mean[3] = wrap_angle(ue_post.mean[3]);

    // Reduce the hypothesis mixture to a single PMB and prune.
    let hypotheses: Vec<(f64, Vec<BernoulliComponent>)> = weights
        .iter()
        .zip(&updates)
        .map(|(w, u)| (*w, u.bernoullis.clone()))
        .collect();
    let map = pmbm_to_pmb(map_pred.ppp, &hypotheses)?;
    let map = prune(map, config.prune_r_min, config.prune_kind_w_min, config.merge_dist);

    let linearized: Vec<f64> = updates
        .iter()
        .filter(|u| u.iterations > 0)
        .map(|u| u.iterations as f64)
        .collect();
    let mean_iterations = if linearized.is_empty() {
        1.0
    } else {
        linearized.iter().sum::<f64>() / linearized.len() as f64
    };
    let update_seconds = t1.elapsed().as_secs_f64();

    Ok((
        FilterState { ue: ue_post, map, step: state.step + 1 },
        StepDiagnostics {
            hypotheses_evaluated: updates.len(),
            hypotheses_dropped: dropped,
            mean_iterations,
            predict_seconds,
            update_seconds,
        },
    ))
}
