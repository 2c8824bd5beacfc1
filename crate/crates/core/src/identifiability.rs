//! Excitation diagnostics.
//!
//! With the state `(ω_γ, α_γ, θ_t, θ_ba)` the observability matrix built from
//! the radar-b measurement and its first Lie derivative loses rank exactly
//! when
//!
//! ```text
//! det(O) = α_γ · (h_a × t)_z = α_γ · (h_ax sin θ_t - h_ay cos θ_t)
//! ```
//!
//! vanishes: the platform needs angular acceleration, a nonzero velocity, and
//! a velocity direction that differs from the translation axis.

use serde::{Deserialize, Serialize};

use crate::calib::{init_motion_states, Extrinsics, MeasurementPair};
use crate::error::{Error, Result};
use crate::geometry::{median, serde_vec2, unit, Vec2};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExcitationSample {
    #[serde(with = "serde_vec2")]
    pub h_a: Vec2,
    pub omega_gamma: f64,
    pub alpha_gamma: f64,
    pub theta_t: f64,
}

/// Signed determinant of the observability matrix for one time step. The sign
/// follows `α_γ · (h_a × t)_z`; diagnostics only use the magnitude.
pub fn observability_det(sample: &ExcitationSample) -> f64 {
    let (s, c) = sample.theta_t.sin_cos();
    sample.alpha_gamma * (sample.h_a.x * s - sample.h_a.y * c)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExcitationFlag {
    ZeroAlpha,
    ZeroVelocity,
    AxisAlignedMotion,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExcitationThresholds {
    /// A step is degenerate when `|det(O)|` is at most this fraction of
    /// `median speed × median |α_γ|`.
    pub relative_det: f64,
    /// Absolute floor for the determinant and `|α_γ|` tests, guarding against
    /// rounding noise on exactly degenerate data.
    pub absolute_floor: f64,
    /// Half-width (s) of the local linear fit used to differentiate `ω_γ`.
    /// Steps with fewer than two neighbours inside the window fall back to
    /// central (or one-sided) differences.
    pub alpha_half_window: f64,
    /// `α_γ` counts as zero unless it exceeds this many standard errors of
    /// the local fit.
    pub alpha_significance: f64,
    /// Speed (m/s) below which a step counts as stationary.
    pub min_speed: f64,
    /// `|sin|` of the angle between `h_a` and the axis below which the motion
    /// counts as aligned with the translation axis.
    pub axis_alignment_sin: f64,
    /// A flag is raised when its condition holds on at least this fraction of
    /// steps.
    pub flag_fraction: f64,
    /// The solver refuses data with a larger degenerate fraction.
    pub max_degenerate_fraction: f64,
}

impl Default for ExcitationThresholds {
    fn default() -> Self {
        Self {
            relative_det: 1e-3,
            absolute_floor: 1e-12,
            alpha_half_window: 1.5,
            alpha_significance: 3.0,
            min_speed: 0.05,
            axis_alignment_sin: 0.05,
            flag_fraction: 0.05,
            max_degenerate_fraction: 0.95,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExcitationReport {
    pub fraction_degenerate: f64,
    pub min_abs_det: f64,
    pub mean_abs_det: f64,
    /// Degeneracy threshold on `|det(O)|` actually applied.
    pub det_threshold: f64,
    pub flags: Vec<ExcitationFlag>,
    pub samples: Vec<ExcitationSample>,
    pub degenerate: Vec<bool>,
}

/// Local slope of `values` against `times` around index `i`, with its
/// standard error.
pub(crate) fn local_slope(times: &[f64], values: &[f64], i: usize, half_window: f64) -> (f64, f64) {
    let n = times.len();
    let t0 = times[i];
    let mut lo = i;
    while lo > 0 && t0 - times[lo - 1] <= half_window {
        lo -= 1;
    }
    let mut hi = i;
    while hi + 1 < n && times[hi + 1] - t0 <= half_window {
        hi += 1;
    }
    // need at least one neighbour on each side where possible
    if lo == i && i > 0 {
        lo = i - 1;
    }
    if hi == i && i + 1 < n {
        hi = i + 1;
    }
    let idx = lo..=hi;
    let k = (hi - lo + 1) as f64;
    let tm = idx.clone().map(|j| times[j]).sum::<f64>() / k;
    let vm = idx.clone().map(|j| values[j]).sum::<f64>() / k;
    let sxx: f64 = idx.clone().map(|j| (times[j] - tm).powi(2)).sum();
    let sxy: f64 = idx
        .clone()
        .map(|j| (times[j] - tm) * (values[j] - vm))
        .sum();
    if sxx <= 0.0 {
        return (0.0, 0.0);
    }
    let slope = sxy / sxx;
    if k <= 2.0 {
        return (slope, 0.0);
    }
    let rss: f64 = idx
        .map(|j| {
            let r = values[j] - vm - slope * (times[j] - tm);
            r * r
        })
        .sum();
    (slope, (rss / (k - 2.0) / sxx).sqrt())
}

/// Per-step excitation diagnostics with motion states initialized from the
/// given extrinsics guess. Pairs must be sorted by timestamp.
pub fn excitation_report(
    pairs: &[MeasurementPair],
    extrinsics_guess: &Extrinsics,
    thresholds: &ExcitationThresholds,
) -> Result<ExcitationReport> {
    if pairs.len() < 3 {
        return Err(Error::InsufficientData(format!(
            "excitation check needs at least 3 pairs, got {}",
            pairs.len()
        )));
    }
    if pairs.windows(2).any(|w| !(w[1].timestamp > w[0].timestamp)) {
        return Err(Error::InvalidArgument(
            "pairs must have strictly increasing timestamps".into(),
        ));
    }
    let states = init_motion_states(
        pairs,
        extrinsics_guess,
        crate::calib::DEFAULT_COVARIANCE_FLOOR,
    )?;
    let times: Vec<f64> = pairs.iter().map(|p| p.timestamp).collect();
    let omegas: Vec<f64> = states
        .iter()
        .map(|s| s.map_or(0.0, |s| s.omega_gamma))
        .collect();

    let n = pairs.len();
    let mut samples = Vec::with_capacity(n);
    let mut alpha_se = Vec::with_capacity(n);
    for (i, p) in pairs.iter().enumerate() {
        let (alpha, se) = local_slope(&times, &omegas, i, thresholds.alpha_half_window);
        samples.push(ExcitationSample {
            h_a: p.h_a.velocity,
            omega_gamma: omegas[i],
            alpha_gamma: alpha,
            theta_t: extrinsics_guess.theta_t,
        });
        alpha_se.push(se);
    }

    let speeds: Vec<f64> = samples.iter().map(|s| s.h_a.norm()).collect();
    let abs_alpha: Vec<f64> = samples.iter().map(|s| s.alpha_gamma.abs()).collect();
    let scale = median(&speeds).unwrap_or(0.0) * median(&abs_alpha).unwrap_or(0.0);
    let det_threshold = (thresholds.relative_det * scale).max(thresholds.absolute_floor);
    let axis = unit(extrinsics_guess.theta_t);

    let mut degenerate = Vec::with_capacity(n);
    let mut dets = Vec::with_capacity(n);
    let (mut n_alpha, mut n_speed, mut n_aligned) = (0usize, 0usize, 0usize);
    for ((s, se), speed) in samples.iter().zip(&alpha_se).zip(&speeds) {
        let det = observability_det(s).abs();
        let zero_alpha = s.alpha_gamma.abs()
            <= (thresholds.alpha_significance * se).max(thresholds.absolute_floor);
        let stationary = *speed < thresholds.min_speed;
        let aligned = *speed > 0.0
            && (s.h_a.x * axis.y - s.h_a.y * axis.x).abs() / speed < thresholds.axis_alignment_sin;
        n_alpha += zero_alpha as usize;
        n_speed += stationary as usize;
        n_aligned += aligned as usize;
        degenerate.push(zero_alpha || det <= det_threshold);
        dets.push(det);
    }

    let limit = thresholds.flag_fraction * n as f64;
    let mut flags = Vec::new();
    if n_alpha as f64 >= limit {
        flags.push(ExcitationFlag::ZeroAlpha);
    }
    if n_speed as f64 >= limit {
        flags.push(ExcitationFlag::ZeroVelocity);
    }
    if n_aligned as f64 >= limit {
        flags.push(ExcitationFlag::AxisAlignedMotion);
    }

    Ok(ExcitationReport {
        fraction_degenerate: degenerate.iter().filter(|&&d| d).count() as f64 / n as f64,
        min_abs_det: dets.iter().copied().fold(f64::INFINITY, f64::min),
        mean_abs_det: dets.iter().sum::<f64>() / n as f64,
        det_threshold,
        flags,
        samples,
        degenerate,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ego_velocity::EgoVelocityEstimate;
    use crate::geometry::{perp, rotation};
    use proptest::prelude::*;

    fn sample(hx: f64, hy: f64, alpha: f64, theta_t: f64) -> ExcitationSample {
        ExcitationSample {
            h_a: Vec2::new(hx, hy),
            omega_gamma: 0.3,
            alpha_gamma: alpha,
            theta_t,
        }
    }

    #[test]
    fn det_examples() {
        assert_eq!(observability_det(&sample(1.0, 2.0, 0.0, 0.7)), 0.0);
        let t = 0.7f64;
        assert!(observability_det(&sample(2.0 * t.cos(), 2.0 * t.sin(), 1.5, t)).abs() < 1e-15);
        assert!((observability_det(&sample(0.0, 1.0, 2.0, 0.0)).abs() - 2.0).abs() < 1e-15);
    }

    fn pairs_from(
        ex: &Extrinsics,
        n: usize,
        motion: impl Fn(f64) -> (Vec2, f64),
    ) -> Vec<MeasurementPair> {
        (0..n)
            .map(|i| {
                let t = i as f64 * 0.05;
                let (v, om) = motion(t);
                let hb = rotation(ex.theta_ba) * (perp(&ex.translation_axis()) * om + v);
                MeasurementPair::new(
                    t,
                    EgoVelocityEstimate::isotropic(t, v, 0.0),
                    EgoVelocityEstimate::isotropic(t, hb, 0.0),
                )
            })
            .collect()
    }

    #[test]
    fn constant_rate_is_fully_degenerate() {
        let ex = Extrinsics::new(1.6, -1.0);
        let pairs = pairs_from(&ex, 200, |_| (Vec2::new(1.0, 0.2), 0.5));
        let r = excitation_report(&pairs, &ex, &ExcitationThresholds::default()).unwrap();
        assert_eq!(r.fraction_degenerate, 1.0);
        assert!(r.flags.contains(&ExcitationFlag::ZeroAlpha));
    }

    #[test]
    fn varying_rate_is_excited() {
        let ex = Extrinsics::new(1.6, -1.0);
        let pairs = pairs_from(&ex, 300, |t| {
            (
                Vec2::new(1.0 + 0.5 * (0.42 * t).sin(), 0.3 * (0.84 * t).cos()),
                (0.42 * t + 0.3).sin(),
            )
        });
        let r = excitation_report(&pairs, &ex, &ExcitationThresholds::default()).unwrap();
        assert!(r.fraction_degenerate < 0.1, "{}", r.fraction_degenerate);
        assert!(r.flags.is_empty(), "{:?}", r.flags);
    }

    #[test]
    fn straight_run_along_axis_from_rest_raises_every_flag() {
        // Standing still for the first second, then constant velocity along
        // the translation axis with no rotation.
        let ex = Extrinsics::new(0.4, 0.9);
        let pairs = pairs_from(&ex, 200, |t| {
            let speed = if t < 1.0 { 0.0 } else { 1.2 };
            (ex.translation_axis() * speed, 0.0)
        });
        let r = excitation_report(&pairs, &ex, &ExcitationThresholds::default()).unwrap();
        assert_eq!(r.fraction_degenerate, 1.0);
        for flag in [
            ExcitationFlag::ZeroAlpha,
            ExcitationFlag::ZeroVelocity,
            ExcitationFlag::AxisAlignedMotion,
        ] {
            assert!(r.flags.contains(&flag), "{flag:?} missing from {:?}", r.flags);
        }
    }

    #[test]
    fn too_few_or_unsorted_pairs() {
        let ex = Extrinsics::new(1.0, 0.0);
        let pairs = pairs_from(&ex, 2, |_| (Vec2::new(1.0, 0.0), 0.1));
        assert!(matches!(
            excitation_report(&pairs, &ex, &ExcitationThresholds::default()),
            Err(Error::InsufficientData(_))
        ));
        let mut pairs = pairs_from(&ex, 5, |_| (Vec2::new(1.0, 0.0), 0.1));
        pairs.swap(1, 3);
        assert!(excitation_report(&pairs, &ex, &ExcitationThresholds::default()).is_err());
    }

    #[test]
    fn local_slope_reduces_to_central_difference() {
        let times = [0.0, 0.1, 0.2, 0.3];
        let values = [0.0, 1.0, 4.0, 9.0];
        let (s, _) = local_slope(&times, &values, 1, 0.01);
        assert!((s - 20.0).abs() < 1e-9);
        let (s, _) = local_slope(&times, &values, 0, 0.01);
        assert!((s - 10.0).abs() < 1e-9);
    }

    proptest! {
        #[test]
        fn det_is_bilinear(hx in -3.0..3.0f64, hy in -3.0..3.0f64, a in -2.0..2.0f64,
                           th in 0.0..3.14f64, c in -5.0..5.0f64) {
            let base = observability_det(&sample(hx, hy, a, th));
            let scaled_alpha = observability_det(&sample(hx, hy, c * a, th));
            let scaled_h = observability_det(&sample(c * hx, c * hy, a, th));
            prop_assert!((scaled_alpha - c * base).abs() < 1e-12 * (1.0 + base.abs() * c.abs()));
            prop_assert!((scaled_h - c * base).abs() < 1e-12 * (1.0 + base.abs() * c.abs()));
        }

        #[test]
        fn det_ignores_motion_along_axis(hx in -3.0..3.0f64, hy in -3.0..3.0f64, a in -2.0..2.0f64,
                                         th in 0.0..3.14f64, k in -5.0..5.0f64) {
            let base = observability_det(&sample(hx, hy, a, th));
            let shifted = observability_det(&sample(hx + k * th.cos(), hy + k * th.sin(), a, th));
            prop_assert!((base - shifted).abs() < 1e-12 * (1.0 + k.abs() * a.abs()));
        }
    }
}
