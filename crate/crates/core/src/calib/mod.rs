//! Batch estimation of the yaw `θ_ba` and translation axis `θ_t` between two
//! rigidly mounted, coplanar radars from their paired ego-velocity estimates.
//!
//! Measurement model at instant `j`, with `t = (cos θ_t, sin θ_t)`:
//!
//! ```text
//! h_a = v_a + n_a
//! h_b = R(θ_ba) (ω_γ · perp(t) + v_a) + n_b
//! ```
//!
//! `ω_γ` is the angular rate multiplied by the (unknown) lever-arm length; the
//! unit-norm translation removes the scale ambiguity between the two. The
//! state holds `(v_a, ω_γ)` per instant plus the two shared angles.

mod init;
mod lm;
mod metrics;
mod problem;

use serde::{Deserialize, Serialize};

use crate::ego_velocity::EgoVelocityEstimate;
use crate::geometry::{axis_angle, serde_vec2, signed_angle, unit, Vec2};

pub use init::{
    default_k, init_extrinsics, init_motion_states, init_rotation, init_translation_axis,
    profile_cost, YAW_SCAN_STEPS,
};
pub use lm::{solve_lm, solve_lm_from, CalibrationReport, SolverOptions, Termination};
pub use metrics::{
    fused_ego_velocities, velocity_error_metric, TruthVelocity, VelocityErrorSeries,
    VelocityReference,
};
pub use problem::{
    cost, jacobian, residuals, unconstrained_objective, BlockJacobian, DEFAULT_COVARIANCE_FLOOR,
};

/// Ego-velocity estimates of radars a and b at one instant.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeasurementPair {
    pub h_a: EgoVelocityEstimate,
    pub h_b: EgoVelocityEstimate,
    pub timestamp: f64,
}

impl MeasurementPair {
    pub fn new(timestamp: f64, h_a: EgoVelocityEstimate, h_b: EgoVelocityEstimate) -> Self {
        Self { h_a, h_b, timestamp }
    }
}

/// Per-instant motion: velocity of radar a and the unscaled angular rate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MotionState {
    #[serde(with = "serde_vec2")]
    pub v_a: Vec2,
    /// `ω · ‖t‖`, rad·m/s
    pub omega_gamma: f64,
}

impl MotionState {
    pub fn new(v_a: Vec2, omega_gamma: f64) -> Self {
        Self { v_a, omega_gamma }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Extrinsics {
    /// Translation axis, reported in `[0, π)`.
    pub theta_t: f64,
    /// Yaw from radar a to radar b, reported in `(-π, π]`.
    pub theta_ba: f64,
}

impl Extrinsics {
    /// Builds wrapped extrinsics.
    pub fn new(theta_t: f64, theta_ba: f64) -> Self {
        Self {
            theta_t: axis_angle(theta_t),
            theta_ba: signed_angle(theta_ba),
        }
    }

    /// Unit translation vector `(cos θ_t, sin θ_t)`.
    pub fn translation_axis(&self) -> Vec2 {
        unit(self.theta_t)
    }
}

/// Full optimization state.
#[derive(Debug, Clone, PartialEq)]
pub struct CalibState {
    pub motion: Vec<MotionState>,
    pub extrinsics: Extrinsics,
}
