//! Poisson multi-Bernoulli SLAM filters for 5G mmWave positioning.
//!
//! A base station with known position sends downlink signals that reach a
//! moving user terminal directly and via reflections (virtual anchors) and
//! scattering (scatter points). Each propagation path yields a
//! `[TOA, AOA, AOD]` measurement. The filters in this crate jointly track
//! the user state (position, heading, clock bias) and map the landmarks,
//! enumerating data associations with Murty's algorithm and updating each
//! hypothesis with either prior linearization (EK) or iterated posterior
//! linearization (IPL).
//!
//! Module map:
//! - [`gaussian`]: dense Gaussian primitives (factorization, PSD repair,
//!   moment matching, KL divergence)
//! - [`geometry`]: the TOA/AOA/AOD measurement model and its inverse
//! - [`linearization`]: cubature-based statistical linear regression, the
//!   EKF linearizer and the iterated posterior linearization filter
//! - [`assignment`]: rectangular assignment and Murty's k-best enumeration
//! - [`pmb`]: the Poisson multi-Bernoulli map representation
//! - [`filter`]: the per-step SLAM recursion
//! - [`sim`]: scenario generation, measurement simulation, Monte Carlo runs
//! - [`metrics`]: GOSPA and user-state error summaries
//! - [`config`]: the TOML experiment configuration schema

pub mod assignment;
pub mod config;
pub mod error;
pub mod filter;
pub mod gaussian;
pub mod geometry;
pub mod linearization;
pub mod metrics;
pub mod pmb;
pub mod sim;

pub use error::{Error, Result};
