//! Metric translation magnitude from an auxiliary yaw-rate reference.
//!
//! The calibration recovers `ω_γ = ω‖t‖`. Any sensor that measures the yaw
//! rate `ω` of the platform (a gyro, or headings from a pose source) fixes
//! `‖t‖ = |ω_γ| / |ω|`. The sign of the translation stays ambiguous unless the
//! reference axis is known to point the same way as radar a's z-axis.

use std::path::Path;

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::calib::CalibrationReport;
use crate::error::{Error, Result};
use crate::geometry::median;
use crate::pipeline::read_numeric_rows;

/// Yaw rate samples of the platform.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AngularRateSeries {
    pub timestamps: Vec<f64>,
    /// rad/s
    pub omega_ref: Vec<f64>,
    pub source: String,
}

fn check_increasing(timestamps: &[f64]) -> Result<()> {
    if timestamps.iter().any(|t| !t.is_finite()) {
        return Err(Error::InvalidArgument("timestamps must be finite".into()));
    }
    if let Some(i) = timestamps.windows(2).position(|w| w[1] <= w[0]) {
        return Err(Error::InvalidArgument(format!(
            "timestamps must be strictly increasing (sample {} at {} follows {})",
            i + 1,
            timestamps[i + 1],
            timestamps[i]
        )));
    }
    Ok(())
}

impl AngularRateSeries {
    pub fn new(timestamps: Vec<f64>, omega_ref: Vec<f64>, source: impl Into<String>) -> Result<Self> {
        if timestamps.len() != omega_ref.len() {
            return Err(Error::InvalidArgument(format!(
                "{} timestamps for {} rate samples",
                timestamps.len(),
                omega_ref.len()
            )));
        }
        check_increasing(&timestamps)?;
        Ok(Self {
            timestamps,
            omega_ref,
            source: source.into(),
        })
    }

    /// Linear interpolation; `None` outside the sampled interval.
    pub fn at(&self, t: f64) -> Option<f64> {
        let ts = &self.timestamps;
        let first = *ts.first()?;
        let last = *ts.last()?;
        if !(t >= first && t <= last) {
            return None;
        }
        let i = ts.partition_point(|&s| s < t);
        if ts[i] == t {
            return Some(self.omega_ref[i]);
        }
        let w = (t - ts[i - 1]) / (ts[i] - ts[i - 1]);
        Some((1.0 - w) * self.omega_ref[i - 1] + w * self.omega_ref[i])
    }

    /// Reads `timestamp,omega` rows. Lines starting with `#` and blank lines
    /// are skipped.
    pub fn read_csv(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let rows = read_numeric_rows(path, 2)?;
        let (t, w) = rows.into_iter().map(|r| (r[0], r[1])).unzip();
        Self::new(t, w, path.display().to_string())
    }
}

/// Headings of the platform, e.g. from a pose source.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeadingSeries {
    pub timestamps: Vec<f64>,
    /// rad, possibly wrapped
    pub heading: Vec<f64>,
}

impl HeadingSeries {
    pub fn new(timestamps: Vec<f64>, heading: Vec<f64>) -> Result<Self> {
        if timestamps.len() != heading.len() {
            return Err(Error::InvalidArgument(format!(
                "{} timestamps for {} headings",
                timestamps.len(),
                heading.len()
            )));
        }
        Ok(Self { timestamps, heading })
    }

    /// Reads `timestamp,heading` rows.
    pub fn read_csv(path: impl AsRef<Path>) -> Result<Self> {
        let rows = read_numeric_rows(path.as_ref(), 2)?;
        let (t, h) = rows.into_iter().map(|r| (r[0], r[1])).unzip();
        Self::new(t, h)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SmootherConfig {
    /// Heading measurement noise, rad.
    pub heading_sigma: f64,
    /// Spectral density of the jerk driving the constant-acceleration model,
    /// rad²/s⁵.
    pub jerk_psd: f64,
}

impl Default for SmootherConfig {
    fn default() -> Self {
        Self {
            heading_sigma: 0.01,
            jerk_psd: 1.0,
        }
    }
}

fn unwrap_angles(raw: &[f64]) -> Vec<f64> {
    use std::f64::consts::{PI, TAU};
    let mut out = Vec::with_capacity(raw.len());
    let mut offset = 0.0;
    for (i, &a) in raw.iter().enumerate() {
        if i > 0 {
            let d = a - raw[i - 1];
            if d > PI {
                offset -= TAU;
            } else if d < -PI {
                offset += TAU;
            }
        }
        out.push(a + offset);
    }
    out
}

/// Fixed-interval (Rauch–Tung–Striebel) smoother with a constant-acceleration
/// model over the unwrapped heading. Returns the smoothed rate at the pose
/// timestamps.
pub fn smooth_angular_rate_from_poses(
    poses: &HeadingSeries,
    config: &SmootherConfig,
) -> Result<AngularRateSeries> {
    let n = poses.timestamps.len();
    if n < 3 {
        return Err(Error::InsufficientData(format!(
            "smoothing needs at least 3 heading samples, got {n}"
        )));
    }
    check_increasing(&poses.timestamps)?;
    if !(config.heading_sigma > 0.0 && config.jerk_psd > 0.0) {
        return Err(Error::InvalidArgument(
            "heading_sigma and jerk_psd must be positive".into(),
        ));
    }
    let ts = &poses.timestamps;
    let z = unwrap_angles(&poses.heading);
    let r = config.heading_sigma.powi(2);
    let q = config.jerk_psd;
    let h = Vector3::new(1.0, 0.0, 0.0);

    // Quadratic through the first three samples as the prior mean.
    let (d1, d2) = (ts[1] - ts[0], ts[2] - ts[0]);
    let s1 = (z[1] - z[0]) / d1;
    let s2 = (z[2] - z[0]) / d2;
    let c = (s2 - s1) / (d2 - d1);
    let mut x = Vector3::new(z[0], s1 - c * d1, 2.0 * c);
    let mut p = Matrix3::from_diagonal(&Vector3::new(r, r / (d1 * d1) + 1.0, r / (d1 * d1 * d1 * d1) + 1.0));

    let transition = |dt: f64| {
        Matrix3::new(1.0, dt, 0.5 * dt * dt, 0.0, 1.0, dt, 0.0, 0.0, 1.0)
    };
    let process = |dt: f64| {
        let (d2, d3, d4, d5) = (dt * dt, dt.powi(3), dt.powi(4), dt.powi(5));
        Matrix3::new(
            d5 / 20.0, d4 / 8.0, d3 / 6.0,
            d4 / 8.0, d3 / 3.0, d2 / 2.0,
            d3 / 6.0, d2 / 2.0, dt,
        ) * q
    };

    let mut filtered = Vec::with_capacity(n);
    let mut predicted = Vec::with_capacity(n);
    for i in 0..n {
        if i > 0 {
            let f = transition(ts[i] - ts[i - 1]);
            x = f * x;
            p = f * p * f.transpose() + process(ts[i] - ts[i - 1]);
        }
        predicted.push((x, p));
        let s = p[(0, 0)] + r;
        let k = p * h / s;
        x += k * (z[i] - x[0]);
        // Joseph form
        let ikh = Matrix3::identity() - k * h.transpose();
        p = ikh * p * ikh.transpose() + k * k.transpose() * r;
        filtered.push((x, p));
    }

    let mut smoothed = vec![filtered[n - 1].0; n];
    for i in (0..n - 1).rev() {
        let (xf, pf) = filtered[i];
        let (xp, pp) = predicted[i + 1];
        let f = transition(ts[i + 1] - ts[i]);
        let gain = pf * f.transpose() * pp.try_inverse().ok_or_else(|| {
            Error::DegenerateGeometry("singular predicted covariance in smoother".into())
        })?;
        smoothed[i] = xf + gain * (smoothed[i + 1] - xp);
    }

    AngularRateSeries::new(
        ts.clone(),
        smoothed.iter().map(|s| s[1]).collect(),
        "smoothed-heading",
    )
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScaleResult {
    /// Signed median of `ω_γ / ω_ref`; its sign is only meaningful if the
    /// reference axis is known to match radar a's z-axis.
    pub gamma: f64,
    /// ‖t‖, meters
    pub translation_magnitude: f64,
    pub n_samples_used: usize,
    pub sign_ambiguous: bool,
}

/// Minimum number of retained samples for [`recover_scale`].
pub const MIN_SCALE_SAMPLES: usize = 10;

/// Median of `|ω_γ| / |ω_ref|` over instants where `|ω_ref| ≥ min_rate`.
pub fn recover_scale_from_series(
    timestamps: &[f64],
    omega_gamma: &[f64],
    reference: &AngularRateSeries,
    min_rate: f64,
) -> Result<ScaleResult> {
    if timestamps.len() != omega_gamma.len() {
        return Err(Error::InvalidArgument(format!(
            "{} timestamps for {} rates",
            timestamps.len(),
            omega_gamma.len()
        )));
    }
    if !(min_rate >= 0.0) {
        return Err(Error::InvalidArgument(format!("min_rate must be non-negative, got {min_rate}")));
    }
    let (ratios, signed): (Vec<f64>, Vec<f64>) = timestamps
        .iter()
        .zip(omega_gamma)
        .filter_map(|(&t, &wg)| {
            let w = reference.at(t)?;
            (w.abs() >= min_rate && w != 0.0).then(|| ((wg / w).abs(), wg / w))
        })
        .unzip();
    if ratios.len() < MIN_SCALE_SAMPLES {
        return Err(Error::InsufficientExcitation(format!(
            "{} samples with |ω_ref| ≥ {min_rate} rad/s, need {MIN_SCALE_SAMPLES}",
            ratios.len()
        )));
    }
    Ok(ScaleResult {
        gamma: median(&signed).expect("non-empty"),
        translation_magnitude: median(&ratios).expect("non-empty"),
        n_samples_used: ratios.len(),
        sign_ambiguous: true,
    })
}

/// Scale from the fused motion states of a calibration.
pub fn recover_scale(
    calib: &CalibrationReport,
    reference: &AngularRateSeries,
    min_rate: f64,
) -> Result<ScaleResult> {
    let omega: Vec<f64> = calib.fused_motion.iter().map(|m| m.omega_gamma).collect();
    recover_scale_from_series(&calib.timestamps, &omega, reference, min_rate)
}
