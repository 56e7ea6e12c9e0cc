//! Geometric measurement model for the downlink scenario.
//!
//! A known base station (BS) emits signals that reach the user terminal
//! (UE) directly, via specular reflection off a surface (modeled as a
//! virtual anchor, the mirror image of the BS across the surface), or via
//! diffuse scattering off a small object (scatter point). Each path maps
//! to a 5-vector `[toa, aoa_az, aoa_el, aod_az, aod_el]`: time of arrival
//! expressed as path length in meters (clock bias included), angle of
//! arrival in the UE frame, angle of departure in the BS frame.
//!
//! The UE frame is the global frame rotated by the heading about the
//! vertical axis; angles are azimuth in (-pi, pi] and elevation in
//! [-pi/2, pi/2].

use nalgebra::{DVector, Matrix3, Vector3};

use crate::error::{Error, Result};

/// Dimension of the UE state `[x, y, z, heading, clock_bias]`.
pub const UE_DIM: usize = 5;
/// Dimension of one path measurement.
pub const MEAS_DIM: usize = 5;
/// Dimension of a landmark position.
pub const LM_DIM: usize = 3;

/// Wraps an angle to (-pi, pi]; in-range values pass through unchanged.
pub fn wrap_angle(a: f64) -> f64 {
    let pi = std::f64::consts::PI;
    if a > -pi && a <= pi {
        return a;
    }
    let x = a.rem_euclid(2.0 * pi);
    if x > pi {
        x - 2.0 * pi
    } else {
        x
    }
}

/// Unit direction from azimuth and elevation.
pub fn unit_from_angles(az: f64, el: f64) -> Vector3<f64> {
    Vector3::new(el.cos() * az.cos(), el.cos() * az.sin(), el.sin())
}

/// Azimuth and elevation of a direction vector.
pub fn angles_of(v: &Vector3<f64>) -> Result<(f64, f64)> {
    let norm = v.norm();
    if norm < 1e-9 {
        return Err(Error::DegenerateGeometry);
    }
    let az = v.y.atan2(v.x);
    let el = v.z.atan2(v.x.hypot(v.y));
    Ok((az, el))
}

/// Rotation about the vertical axis.
pub fn rot_z(theta: f64) -> Matrix3<f64> {
    let (s, c) = theta.sin_cos();
    Matrix3::new(c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0)
}

// ============================================================================
// Domain types
// ============================================================================

/// User terminal state: position, heading about the vertical axis, and
/// clock bias expressed in meters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UEState {
    pub position: Vector3<f64>,
    pub heading: f64,
    pub clock_bias: f64,
}

impl UEState {
    pub fn new(position: Vector3<f64>, heading: f64, clock_bias: f64) -> Self {
        Self {
            position,
            heading: wrap_angle(heading),
            clock_bias,
        }
    }

    pub fn from_vector(v: &DVector<f64>) -> Self {
        assert_eq!(v.len(), UE_DIM);
        Self::new(Vector3::new(v[0], v[1], v[2]), v[3], v[4])
    }

    pub fn as_vector(&self) -> DVector<f64> {
        DVector::from_row_slice(&[
            self.position.x,
            self.position.y,
            self.position.z,
            self.heading,
            self.clock_bias,
        ])
    }
}

/// Landmark type: the base station, a virtual anchor (mirror image of the
/// BS across a reflecting surface), or a scatter point.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum LandmarkKind {
    Bs,
    Va,
    Sp,
}

impl LandmarkKind {
    pub fn label(&self) -> &'static str {
        match self {
            LandmarkKind::Bs => "BS",
            LandmarkKind::Va => "VA",
            LandmarkKind::Sp => "SP",
        }
    }
}

/// A point landmark with its type.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Landmark {
    pub position: Vector3<f64>,
    pub kind: LandmarkKind,
}

impl Landmark {
    pub fn new(position: Vector3<f64>, kind: LandmarkKind) -> Self {
        Self { position, kind }
    }
}

/// One path measurement.
///
/// `toa` is the path length in meters (delay times the speed of light,
/// clock bias included); `aoa`/`aod` are (azimuth, elevation) pairs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Measurement {
    pub toa: f64,
    pub aoa: [f64; 2],
    pub aod: [f64; 2],
}

impl Measurement {
    /// Normalizes angles: azimuths wrapped to (-pi, pi], elevations
    /// clamped to [-pi/2, pi/2].
    pub fn new(toa: f64, aoa: [f64; 2], aod: [f64; 2]) -> Self {
        let half_pi = std::f64::consts::FRAC_PI_2;
        Self {
            toa,
            aoa: [wrap_angle(aoa[0]), aoa[1].clamp(-half_pi, half_pi)],
            aod: [wrap_angle(aod[0]), aod[1].clamp(-half_pi, half_pi)],
        }
    }

    pub fn from_vector(v: &DVector<f64>) -> Self {
        assert_eq!(v.len(), MEAS_DIM);
        Self::new(v[0], [v[1], v[2]], [v[3], v[4]])
    }

    pub fn as_vector(&self) -> DVector<f64> {
        DVector::from_row_slice(&[self.toa, self.aoa[0], self.aoa[1], self.aod[0], self.aod[1]])
    }

    /// Circular flags for one measurement block; the TOA component is
    /// linear, all angle components wrap.
    pub fn circular_mask() -> [bool; MEAS_DIM] {
        [false, true, true, true, true]
    }
}

/// Detection, field-of-view and clutter model of the channel estimator
/// output, plus the per-path measurement noise covariance.
#[derive(Debug, Clone)]
pub struct SensorModel {
    /// Detection probability inside the field of view.
    pub detection_prob: f64,
    /// Scatter points are detectable within this range of the UE; the BS
    /// and virtual anchors are always within view.
    pub fov_radius_sp: f64,
    /// Expected number of clutter measurements per scan.
    pub clutter_rate: f64,
    /// Uniform clutter density over the measurement space.
    pub clutter_density: f64,
    /// Largest representable TOA, bounding the measurement space.
    pub toa_max: f64,
    /// Measurement noise covariance (5x5).
    pub noise_cov: nalgebra::DMatrix<f64>,
}

impl SensorModel {
    pub fn new(
        detection_prob: f64,
        fov_radius_sp: f64,
        clutter_rate: f64,
        toa_max: f64,
        noise_cov: nalgebra::DMatrix<f64>,
    ) -> Self {
        assert!((0.0..=1.0).contains(&detection_prob));
        assert!(toa_max > 0.0 && clutter_rate >= 0.0);
        assert_eq!(noise_cov.nrows(), MEAS_DIM);
        assert_eq!(noise_cov.ncols(), MEAS_DIM);
        let volume = Self::measurement_space_volume(toa_max);
        Self {
            detection_prob,
            fov_radius_sp,
            clutter_rate,
            clutter_density: clutter_rate / volume,
            toa_max,
            noise_cov,
        }
    }

    /// Volume of `[0, toa_max] x az x el x az x el`.
    pub fn measurement_space_volume(toa_max: f64) -> f64 {
        use std::f64::consts::PI;
        toa_max * (2.0 * PI) * PI * (2.0 * PI) * PI
    }
}

/// Whether a landmark is detectable from the current UE position.
pub fn in_fov(landmark: &Landmark, ue: &UEState, sensor: &SensorModel) -> bool {
    match landmark.kind {
        LandmarkKind::Bs | LandmarkKind::Va => true,
        LandmarkKind::Sp => (landmark.position - ue.position).norm() <= sensor.fov_radius_sp,
    }
}

// ============================================================================
// Measurement model
// ============================================================================

/// The path geometry anchored at the known BS position.
#[derive(Debug, Clone, Copy)]
pub struct MeasurementModel {
    pub bs_position: Vector3<f64>,
}

impl MeasurementModel {
    pub fn new(bs_position: Vector3<f64>) -> Self {
        Self { bs_position }
    }

    pub fn bs_landmark(&self) -> Landmark {
        Landmark::new(self.bs_position, LandmarkKind::Bs)
    }

    /// Noiseless measurement of a landmark from the UE.
    ///
    /// BS: direct path. VA: reflected path through the incidence point
    /// `q`, the intersection of the segment VA-UE with the mirror plane
    /// (the perpendicular bisector plane of BS-VA). SP: scattered path
    /// BS-SP-UE.
    pub fn measure(&self, landmark: &Landmark, ue: &UEState) -> Result<Measurement> {
        let to_ue_frame = rot_z(-ue.heading);
        match landmark.kind {
            LandmarkKind::Bs => {
                let dep = ue.position - self.bs_position;
                let toa = dep.norm() + ue.clock_bias;
                let aod = angles_of(&dep)?;
                let aoa = angles_of(&(to_ue_frame * -dep))?;
                Ok(Measurement::new(toa, [aoa.0, aoa.1], [aod.0, aod.1]))
            }
            LandmarkKind::Va => {
                let to_ue = ue.position - landmark.position;
                let normal = landmark.position - self.bs_position;
                if normal.norm() < 1e-9 {
                    return Err(Error::DegenerateGeometry);
                }
                let denom = normal.dot(&to_ue);
                if denom.abs() < 1e-12 * normal.norm() * to_ue.norm().max(1e-9) {
                    return Err(Error::DegenerateGeometry);
                }
                let mid = 0.5 * (landmark.position + self.bs_position);
                let t = normal.dot(&(mid - landmark.position)) / denom;
                let incidence = landmark.position + t * to_ue;
                let toa = to_ue.norm() + ue.clock_bias;
                let aoa = angles_of(&(to_ue_frame * (incidence - ue.position)))?;
                let aod = angles_of(&(incidence - self.bs_position))?;
                Ok(Measurement::new(toa, [aoa.0, aoa.1], [aod.0, aod.1]))
            }
            LandmarkKind::Sp => {
                let toa = (landmark.position - self.bs_position).norm()
                    + (ue.position - landmark.position).norm()
                    + ue.clock_bias;
                let aod = angles_of(&(landmark.position - self.bs_position))?;
                let aoa = angles_of(&(to_ue_frame * (landmark.position - ue.position)))?;
                Ok(Measurement::new(toa, [aoa.0, aoa.1], [aod.0, aod.1]))
            }
        }
    }

    /// Recovers a landmark position from a measurement and the UE state.
    ///
    /// VA positions follow directly from range and arrival direction; SP
    /// positions solve the two-leg path-length equation for the UE-SP
    /// distance. The BS position is known, so inversion is unsupported.
    pub fn invert_measurement(
        &self,
        z: &Measurement,
        ue: &UEState,
        kind: LandmarkKind,
    ) -> Result<Vector3<f64>> {
        let arrival = rot_z(ue.heading) * unit_from_angles(z.aoa[0], z.aoa[1]);
        match kind {
            LandmarkKind::Bs => Err(Error::UnsupportedKind),
            LandmarkKind::Va => {
                let range = z.toa - ue.clock_bias;
                if range <= 0.0 {
                    return Err(Error::NoPhysicalSolution);
                }
                Ok(ue.position + range * arrival)
            }
            LandmarkKind::Sp => {
                let rho = z.toa - ue.clock_bias;
                if rho <= 0.0 {
                    return Err(Error::NoPhysicalSolution);
                }
                let from_bs = ue.position - self.bs_position;
                let denom = 2.0 * (rho + from_bs.dot(&arrival));
                if denom <= 1e-12 {
                    return Err(Error::NoPhysicalSolution);
                }
                let d_ue = (rho * rho - from_bs.norm_squared()) / denom;
                if d_ue <= 0.0 || rho - d_ue < 0.0 {
                    return Err(Error::NoPhysicalSolution);
                }
                Ok(ue.position + d_ue * arrival)
            }
        }
    }

    /// Builds the stacked measurement function over the joint state
    /// `[UE | lm_1 | lm_2 | ...]` for an ordered list of landmark kinds.
    ///
    /// BS entries read the known BS position and consume no state block;
    /// VA/SP entries consume consecutive 3-dim blocks in order.
    pub fn stacked_fn(&self, kinds: &[LandmarkKind]) -> StackedMeasurementFn {
        StackedMeasurementFn {
            model: *self,
            kinds: kinds.to_vec(),
        }
    }
}

/// Concatenation of per-landmark measurement functions on a joint state.
#[derive(Debug, Clone)]
pub struct StackedMeasurementFn {
    model: MeasurementModel,
    kinds: Vec<LandmarkKind>,
}

impl StackedMeasurementFn {
    pub fn dim_in(&self) -> usize {
        UE_DIM + LM_DIM * self.state_landmark_count()
    }

    pub fn dim_out(&self) -> usize {
        MEAS_DIM * self.kinds.len()
    }

    fn state_landmark_count(&self) -> usize {
        self.kinds.iter().filter(|k| **k != LandmarkKind::Bs).count()
    }

    /// Per-component circular flags for residual wrapping.
    pub fn circular_mask(&self) -> Vec<bool> {
        self.kinds
            .iter()
            .flat_map(|_| Measurement::circular_mask())
            .collect()
    }

    pub fn eval(&self, joint: &DVector<f64>) -> Result<DVector<f64>> {
        if joint.len() != self.dim_in() {
            return Err(Error::DimensionMismatch {
                expected: self.dim_in(),
                got: joint.len(),
            });
        }
        let ue = UEState::from_vector(&joint.rows(0, UE_DIM).into_owned());
        let mut out = DVector::zeros(self.dim_out());
        let mut offset = UE_DIM;
        for (i, kind) in self.kinds.iter().enumerate() {
            let landmark = match kind {
                LandmarkKind::Bs => self.model.bs_landmark(),
                _ => {
                    let pos = Vector3::new(joint[offset], joint[offset + 1], joint[offset + 2]);
                    offset += LM_DIM;
                    Landmark::new(pos, *kind)
                }
            };
            let z = self.model.measure(&landmark, &ue)?;
            out.rows_mut(i * MEAS_DIM, MEAS_DIM)
                .copy_from(&z.as_vector());
        }
        Ok(out)
    }
}
