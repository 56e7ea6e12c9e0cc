//! The Poisson multi-Bernoulli map representation.
//!
//! Undetected landmarks live in a Poisson point process with uniform
//! intensity over a configured region, one rate per landmark kind.
//! Detected landmarks are Bernoulli components: an existence probability
//! plus a discrete kind mixture (VA vs SP), each kind carrying a Gaussian
//! position density. Keeping the kind ambiguity inside the component
//! avoids expanding it into the global association problem.
//!
//! The map itself is static, so prediction is the identity; the dynamics
//! live entirely in the update machinery (birth from measurements, missed
//! detections, reduction of the hypothesis mixture back to a single PMB,
//! pruning and merging).

use nalgebra::{DMatrix, DVector, Vector3};

use crate::error::{Error, Result};
use crate::gaussian::{log_pdf_residual, moment_match, GaussianDensity};
use crate::geometry::{
    wrap_angle, LandmarkKind, Measurement, MeasurementModel, SensorModel, UEState, LM_DIM, UE_DIM,
};
use crate::linearization::{propagate_moments, slr_wrapped};

/// Stable identifier of a Bernoulli component, shared across hypotheses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct BernoulliId(pub u64);

impl BernoulliId {
    /// Deterministic id for a landmark born from measurement `meas_index`
    /// at time `step`; identical across hypotheses so the reduction step
    /// can marginalize births of the same measurement.
    pub fn birth(step: usize, meas_index: usize) -> Self {
        Self(((step as u64) << 16) | meas_index as u64)
    }
}

/// One kind hypothesis inside a Bernoulli component.
#[derive(Debug, Clone)]
pub struct KindComponent {
    pub kind: LandmarkKind,
    pub weight: f64,
    pub density: GaussianDensity,
}

/// A potentially existing landmark.
#[derive(Debug, Clone)]
pub struct BernoulliComponent {
    pub id: BernoulliId,
    pub existence: f64,
    /// Kind mixture in fixed order (VA before SP); weights sum to one.
    pub kinds: Vec<KindComponent>,
}

impl BernoulliComponent {
    /// The maximum-weight kind; ties resolve to the first (VA) entry.
    pub fn map_kind(&self) -> &KindComponent {
        let mut best = 0;
        for (i, k) in self.kinds.iter().enumerate() {
            if k.weight > self.kinds[best].weight {
                best = i;
            }
        }
        &self.kinds[best]
    }

    pub fn kind_weight(&self, kind: LandmarkKind) -> f64 {
        self.kinds
            .iter()
            .find(|k| k.kind == kind)
            .map_or(0.0, |k| k.weight)
    }

    pub fn normalize_kinds(&mut self) {
        let total: f64 = self.kinds.iter().map(|k| k.weight).sum();
        assert!(total > 0.0, "kind weights sum to zero");
        for k in &mut self.kinds {
            k.weight /= total;
        }
    }
}

/// Uniform Poisson intensity for undetected landmarks over a box region.
#[derive(Debug, Clone)]
pub struct PppIntensity {
    pub region_min: Vector3<f64>,
    pub region_max: Vector3<f64>,
    /// Expected number of undetected VAs over the region.
    pub rate_va: f64,
    /// Expected number of undetected SPs over the region.
    pub rate_sp: f64,
}

impl PppIntensity {
    pub fn new(
        region_min: Vector3<f64>,
        region_max: Vector3<f64>,
        rate_va: f64,
        rate_sp: f64,
    ) -> Self {
        assert!(rate_va >= 0.0 && rate_sp >= 0.0);
        assert!(
            (0..3).all(|i| region_max[i] > region_min[i]),
            "degenerate PPP region"
        );
        Self { region_min, region_max, rate_va, rate_sp }
    }

    pub fn volume(&self) -> f64 {
        (0..3).map(|i| self.region_max[i] - self.region_min[i]).product()
    }

    pub fn rate(&self, kind: LandmarkKind) -> f64 {
        match kind {
            LandmarkKind::Va => self.rate_va,
            LandmarkKind::Sp => self.rate_sp,
            LandmarkKind::Bs => 0.0,
        }
    }

    /// Intensity at a position: `rate / volume` inside the region, zero outside.
    pub fn intensity(&self, kind: LandmarkKind, position: &Vector3<f64>) -> f64 {
        let inside = (0..3)
            .all(|i| position[i] >= self.region_min[i] && position[i] <= self.region_max[i]);
        if inside {
            self.rate(kind) / self.volume()
        } else {
            0.0
        }
    }
}

/// The PMB map: PPP intensity plus Bernoulli components with unique ids.
#[derive(Debug, Clone)]
pub struct PmbMap {
    pub ppp: PppIntensity,
    pub bernoullis: Vec<BernoulliComponent>,
}

impl PmbMap {
    pub fn new(ppp: PppIntensity) -> Self {
        Self { ppp, bernoullis: Vec::new() }
    }
}

/// One global data-association hypothesis.
#[derive(Debug, Clone)]
pub struct GlobalHypothesis {
    pub weight: f64,
    /// Target of each measurement, in measurement order.
    pub assignment: Vec<AssociationTarget>,
    /// Whether each Bernoulli (in map order) was detected.
    pub detected_flags: Vec<bool>,
}

/// What a measurement was associated with.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AssociationTarget {
    /// The known base station (updates only the UE state).
    Bs,
    /// An existing Bernoulli component.
    Bernoulli(BernoulliId),
    /// A birth from the PPP, or clutter when birth is infeasible.
    NewOrClutter,
}

/// The map is static: prediction is the identity.
pub fn predict_map(map: PmbMap) -> PmbMap {
    map
}

/// Result of attempting a landmark birth from one measurement.
#[derive(Debug, Clone)]
pub struct BirthOutcome {
    /// The newborn component, or `None` when no kind admits a physical
    /// inversion or the birth intensity vanishes (pure clutter).
    pub bernoulli: Option<BernoulliComponent>,
    /// Association weight of the new/clutter column: `c(z) + L_birth`.
    pub weight: f64,
}

impl BirthOutcome {
    pub fn log_weight(&self) -> f64 {
        self.weight.ln()
    }
}

/// Builds a newborn Bernoulli from a measurement.
///
/// Per kind, the position prior comes from inverting the measurement at
/// the UE prior mean, with covariance from an SLR of the inverse map over
/// the measurement noise. The birth likelihood checks the measurement
/// against the forward model over the joint (UE, newborn) prior, so a
/// geometrically inconsistent measurement (e.g. clutter with mismatched
/// departure angles) earns a near-zero birth weight.
pub fn birth_bernoulli(
    model: &MeasurementModel,
    z: &Measurement,
    ue_prior: &GaussianDensity,
    ppp: &PppIntensity,
    sensor: &SensorModel,
    id: BernoulliId,
) -> BirthOutcome {
    let clutter = sensor.clutter_density;
    let ue_mean = UEState::from_vector(&ue_prior.mean);
    let z_vec = z.as_vector();
    let z_density = GaussianDensity::new(z_vec.clone(), sensor.noise_cov.clone());

    let mut kinds = Vec::new();
    let mut birth_likelihood = 0.0;
    for kind in [LandmarkKind::Va, LandmarkKind::Sp] {
        if ppp.rate(kind) == 0.0 {
            continue;
        }
        // Position prior: inverse map pushed through the measurement noise.
        let inverse_map = |zv: &DVector<f64>| {
            let pos = model.invert_measurement(&Measurement::from_vector(zv), &ue_mean, kind)?;
            Ok(DVector::from_row_slice(&[pos.x, pos.y, pos.z]))
        };
        let Ok(stats) = propagate_moments(&inverse_map, &z_density, &[]) else {
            continue;
        };
        let birth_density = GaussianDensity {
            mean: stats.z_pred.clone(),
            cov: crate::gaussian::ensure_psd(&stats.s_zz, 0.0),
        };
        let birth_pos = Vector3::new(stats.z_pred[0], stats.z_pred[1], stats.z_pred[2]);
        let intensity = ppp.intensity(kind, &birth_pos);
        if intensity == 0.0 {
            continue;
        }
        // Forward consistency over the joint (UE, newborn) prior.
        let mut joint_mean = DVector::zeros(UE_DIM + LM_DIM);
        joint_mean.rows_mut(0, UE_DIM).copy_from(&ue_prior.mean);
        joint_mean.rows_mut(UE_DIM, LM_DIM).copy_from(&birth_density.mean);
        let mut joint_cov = DMatrix::zeros(UE_DIM + LM_DIM, UE_DIM + LM_DIM);
        joint_cov.view_mut((0, 0), (UE_DIM, UE_DIM)).copy_from(&ue_prior.cov);
        joint_cov
            .view_mut((UE_DIM, UE_DIM), (LM_DIM, LM_DIM))
            .copy_from(&birth_density.cov);
        let joint = GaussianDensity::new(joint_mean, joint_cov);
        let stacked = model.stacked_fn(&[kind]);
        let mask = stacked.circular_mask();
        let eval = |s: &DVector<f64>| stacked.eval(s);
        let Ok((_, fwd)) = slr_wrapped(&eval, &joint, &mask) else {
            continue;
        };
        let mut residual = &z_vec - &fwd.z_pred;
        for (k, circ) in mask.iter().enumerate() {
            if *circ {
                residual[k] = wrap_angle(residual[k]);
            }
        }
        let s = &fwd.s_zz + &sensor.noise_cov;
        let Ok(log_pdf) = log_pdf_residual(&residual, &s) else {
            continue;
        };
        let likelihood = intensity * sensor.detection_prob * log_pdf.exp();
        birth_likelihood += likelihood;
        kinds.push(KindComponent { kind, weight: likelihood, density: birth_density });
    }

    if kinds.is_empty() || birth_likelihood <= 0.0 {
        return BirthOutcome { bernoulli: None, weight: clutter };
    }
    let mut bernoulli = BernoulliComponent {
        id,
        existence: birth_likelihood / (clutter + birth_likelihood),
        kinds,
    };
    bernoulli.normalize_kinds();
    BirthOutcome {
        bernoulli: Some(bernoulli),
        weight: clutter + birth_likelihood,
    }
}

/// Missed-detection update of a Bernoulli component.
///
/// Returns the updated component and the hypothesis weight factor
/// `1 - r * p_d`. When that weight vanishes (certain existence, certain
/// detection) the missed-detection event is impossible; the component
/// collapses to zero existence under a zero weight rather than 0/0.
pub fn misdetection_update(b: &BernoulliComponent, p_d_effective: f64) -> (BernoulliComponent, f64) {
    let weight = 1.0 - b.existence * p_d_effective;
    let mut updated = b.clone();
    updated.existence = if weight <= 1e-12 {
        0.0
    } else {
        b.existence * (1.0 - p_d_effective) / weight
    };
    (updated, weight)
}

/// Reduces a weighted set of per-hypothesis Bernoulli posteriors to a
/// single PMB by marginalizing over data associations.
///
/// Per landmark id the merged existence is the weight-averaged existence;
/// the merged kind densities moment-match the per-hypothesis densities
/// with existence-proportional weights.
pub fn pmbm_to_pmb(
    ppp: PppIntensity,
    hypotheses: &[(f64, Vec<BernoulliComponent>)],
) -> Result<PmbMap> {
    if hypotheses.is_empty() {
        return Err(Error::EmptyHypothesisSet);
    }
    let total: f64 = hypotheses.iter().map(|(w, _)| *w).sum();
    assert!(
        (total - 1.0).abs() <= 1e-9,
        "hypothesis weights must be normalized"
    );

    // Stable output order: first appearance across hypotheses.
    let mut order: Vec<BernoulliId> = Vec::new();
    for (_, comps) in hypotheses {
        for c in comps {
            if !order.contains(&c.id) {
                order.push(c.id);
            }
        }
    }

    let mut bernoullis = Vec::with_capacity(order.len());
    for id in order {
        let mut existence = 0.0;
        for (w, comps) in hypotheses {
            if let Some(c) = comps.iter().find(|c| c.id == id) {
                existence += w * c.existence;
            }
        }
        let mut kinds = Vec::new();
        for kind in [LandmarkKind::Va, LandmarkKind::Sp] {
            let mut weights = Vec::new();
            let mut densities = Vec::new();
            let mut kind_mass = 0.0;
            for (w, comps) in hypotheses {
                if let Some(c) = comps.iter().find(|c| c.id == id) {
                    if let Some(kc) = c.kinds.iter().find(|k| k.kind == kind) {
                        // Existence-weighted fusion; plain hypothesis
                        // weights when no existence mass remains.
                        let mass = if existence > 0.0 {
                            w * c.existence * kc.weight
                        } else {
                            w * kc.weight
                        };
                        if mass > 0.0 {
                            weights.push(mass);
                            densities.push(kc.density.clone());
                            kind_mass += mass;
                        }
                    }
                }
            }
            if kind_mass > 0.0 {
                let normalized: Vec<f64> = weights.iter().map(|w| w / kind_mass).collect();
                let density = moment_match(&normalized, &densities)?;
                kinds.push(KindComponent { kind, weight: kind_mass, density });
            }
        }
        if kinds.is_empty() {
            continue;
        }
        let mut merged = BernoulliComponent { id, existence, kinds };
        merged.normalize_kinds();
        bernoullis.push(merged);
    }
    Ok(PmbMap { ppp, bernoullis })
}

/// Removes weak components, collapses weak kind hypotheses and merges
/// duplicate same-kind components closer than `merge_dist` in Mahalanobis
/// distance (measured under the stronger component's MAP-kind density).
pub fn prune(map: PmbMap, r_min: f64, kind_w_min: f64, merge_dist: f64) -> PmbMap {
    let PmbMap { ppp, bernoullis } = map;
    let mut kept: Vec<BernoulliComponent> = Vec::with_capacity(bernoullis.len());
    for mut b in bernoullis {
        if b.existence < r_min {
            continue;
        }
        b.kinds.retain(|k| k.weight >= kind_w_min);
        if b.kinds.is_empty() {
            continue;
        }
        b.normalize_kinds();
        kept.push(b);
    }

    // Merge pass: the strongest component absorbs nearby same-kind duplicates.
    let mut order: Vec<usize> = (0..kept.len()).collect();
    order.sort_by(|&a, &b| kept[b].existence.total_cmp(&kept[a].existence).then(a.cmp(&b)));
    let mut absorbed = vec![false; kept.len()];
    let mut merged: Vec<(usize, BernoulliComponent)> = Vec::new();
    for &i in &order {
        if absorbed[i] {
            continue;
        }
        absorbed[i] = true;
        let mut current = kept[i].clone();
        for &j in &order {
            if absorbed[j] {
                continue;
            }
            let candidate = &kept[j];
            if candidate.map_kind().kind != current.map_kind().kind {
                continue;
            }
            let anchor = current.map_kind();
            let diff = &candidate.map_kind().density.mean - &anchor.density.mean;
            let Some(chol) = nalgebra::Cholesky::new(anchor.density.cov.clone()) else {
                continue;
            };
            let dist = diff.dot(&chol.solve(&diff)).sqrt();
            if dist <= merge_dist {
                current = merge_pair(&current, candidate);
                absorbed[j] = true;
            }
        }
        merged.push((i, current));
    }
    // Restore original map order for determinism.
    merged.sort_by_key(|(i, _)| *i);
    PmbMap {
        ppp,
        bernoullis: merged.into_iter().map(|(_, b)| b).collect(),
    }
}

fn merge_pair(a: &BernoulliComponent, b: &BernoulliComponent) -> BernoulliComponent {
    // Existence of "at least one of the duplicates".
    let existence = 1.0 - (1.0 - a.existence) * (1.0 - b.existence);
    let mut kinds = Vec::new();
    for kind in [LandmarkKind::Va, LandmarkKind::Sp] {
        let wa = a.existence * a.kind_weight(kind);
        let wb = b.existence * b.kind_weight(kind);
        let mass = wa + wb;
        if mass <= 0.0 {
            continue;
        }
        let mut weights = Vec::new();
        let mut densities = Vec::new();
        if wa > 0.0 {
            weights.push(wa / mass);
            densities.push(a.kinds.iter().find(|k| k.kind == kind).unwrap().density.clone());
        }
        if wb > 0.0 {
            weights.push(wb / mass);
            densities.push(b.kinds.iter().find(|k| k.kind == kind).unwrap().density.clone());
        }
        let density = moment_match(&weights, &densities).expect("merge moment match");
        kinds.push(KindComponent { kind, weight: mass, density });
    }
    let mut out = BernoulliComponent { id: a.id, existence, kinds };
    out.normalize_kinds();
    out
}
