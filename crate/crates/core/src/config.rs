//! Experiment configuration: the TOML schema for scenario, sensor,
//! motion, map prior and filter parameters.
//!
//! Unknown keys are rejected so a typo in a config file fails loudly
//! with the offending key named. Radio-stack metadata (carrier, array,
//! numerology) is carried for the record only; it does not enter the
//! simulation.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub scenario: ScenarioSection,
    pub trajectory: TrajectorySection,
    pub process_noise: ProcessNoiseSection,
    pub initial_prior: InitialPriorSection,
    pub sensor: SensorSection,
    pub ppp: PppSection,
    pub filter: FilterSection,
    pub gospa: GospaSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub metadata: Option<MetadataSection>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ScenarioSection {
    pub bs_position: [f64; 3],
    pub seed: u64,
    pub steps: usize,
    /// Reflecting surfaces as planes `normal . x = offset`; each yields a
    /// virtual anchor by mirroring the BS.
    pub va_planes: Vec<PlaneSpec>,
    pub sp_positions: Vec<[f64; 3]>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct PlaneSpec {
    pub normal: [f64; 3],
    pub offset: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct TrajectorySection {
    pub speed: f64,
    pub turn_rate: f64,
    pub step_duration: f64,
    pub initial_position: [f64; 3],
    pub initial_heading: f64,
    pub initial_bias: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ProcessNoiseSection {
    pub pos_std: f64,
    pub z_std: f64,
    pub heading_std: f64,
    pub bias_std: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct InitialPriorSection {
    pub pos_std: f64,
    pub z_std: f64,
    pub heading_std: f64,
    pub bias_std: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct SensorSection {
    pub detection_prob: f64,
    pub fov_radius_sp: f64,
    pub clutter_rate: f64,
    pub toa_max: f64,
    pub toa_std: f64,
    pub angle_std: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct PppSection {
    pub region_min: [f64; 3],
    pub region_max: [f64; 3],
    pub rate_va: f64,
    pub rate_sp: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct FilterSection {
    pub gamma: usize,
    pub gate: f64,
    pub iplf_max_iterations: usize,
    pub iplf_kl_threshold: f64,
    pub prune_r_min: f64,
    pub prune_kind_w_min: f64,
    pub merge_dist: f64,
    pub extract_threshold: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct GospaSection {
    pub cutoff: f64,
    pub exponent: f64,
    pub alpha: f64,
}

/// Radio parameters recorded for reference; not used by the simulation.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct MetadataSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub carrier_ghz: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub array: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub subcarriers: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub symbols: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bandwidth_mhz: Option<f64>,
}

impl Default for ExperimentConfig {
    /// Desk-scale default: a vehicle circling the BS once over 40 steps
    /// inside a 16 m x 16 m room (four reflecting walls) with four
    /// scatter points near the trajectory. Ranges are short relative to
    /// the prior spread, which keeps the measurement nonlinearity active
    /// throughout the run.
    fn default() -> Self {
        Self {
            scenario: ScenarioSection {
                bs_position: [0.0, 0.0, 3.0],
                seed: 1,
                steps: 40,
                va_planes: vec![
                    PlaneSpec { normal: [1.0, 0.0, 0.0], offset: 8.0 },
                    PlaneSpec { normal: [1.0, 0.0, 0.0], offset: -8.0 },
                    PlaneSpec { normal: [0.0, 1.0, 0.0], offset: 8.0 },
                    PlaneSpec { normal: [0.0, 1.0, 0.0], offset: -8.0 },
                ],
                sp_positions: vec![
                    [4.5, 2.0, 1.0],
                    [-2.0, 4.5, 0.8],
                    [-4.5, -2.0, 1.2],
                    [2.0, -4.5, 0.9],
                ],
            },
            trajectory: TrajectorySection {
                speed: 1.2566370614359172,
                turn_rate: 0.3141592653589793,
                step_duration: 0.5,
                initial_position: [4.0, 0.0, 0.0],
                initial_heading: std::f64::consts::FRAC_PI_2,
                initial_bias: 1.0,
            },
            process_noise: ProcessNoiseSection {
                pos_std: 0.8,
                z_std: 0.001,
                heading_std: 0.08,
                bias_std: 0.15,
            },
            initial_prior: InitialPriorSection {
                pos_std: 2.0,
                z_std: 0.01,
                heading_std: 0.4,
                bias_std: 1.0,
            },
            sensor: SensorSection {
                detection_prob: 0.9,
                fov_radius_sp: 6.0,
                clutter_rate: 1.0,
                toa_max: 50.0,
                toa_std: 0.1,
                angle_std: 0.01,
            },
            ppp: PppSection {
                region_min: [-20.0, -20.0, 0.0],
                region_max: [20.0, 20.0, 5.0],
                rate_va: 4.0,
                rate_sp: 4.0,
            },
            filter: FilterSection {
                gamma: 10,
                gate: 40.0,
                iplf_max_iterations: 10,
                iplf_kl_threshold: 1e-4,
                prune_r_min: 1e-3,
                prune_kind_w_min: 1e-2,
                merge_dist: 2.0,
                extract_threshold: 0.5,
            },
            gospa: GospaSection { cutoff: 20.0, exponent: 2.0, alpha: 2.0 },
            metadata: Some(MetadataSection {
                carrier_ghz: Some(28.0),
                array: Some("8x8 URA".to_string()),
                subcarriers: Some(64),
                symbols: Some(16),
                bandwidth_mhz: Some(200.0),
            }),
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml_str(s: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(s).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_path(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    fn validate(&self) -> Result<()> {
        if self.scenario.steps == 0 {
            return Err(Error::Config("scenario.steps must be at least 1".into()));
        }
        if !(0.0..=1.0).contains(&self.sensor.detection_prob) {
            return Err(Error::Config("sensor.detection_prob must lie in [0, 1]".into()));
        }
        if self.filter.gamma == 0 {
            return Err(Error::Config("filter.gamma must be at least 1".into()));
        }
        for (i, p) in self.scenario.va_planes.iter().enumerate() {
            let norm_sq: f64 = p.normal.iter().map(|x| x * x).sum();
            if norm_sq < 1e-18 {
                return Err(Error::Config(format!(
                    "scenario.va_planes[{i}].normal is degenerate"
                )));
            }
        }
        Ok(())
    }
}
