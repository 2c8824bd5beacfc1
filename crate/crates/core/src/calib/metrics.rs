use serde::{Deserialize, Serialize};

use super::problem::StepModel;
use super::{CalibrationReport, Extrinsics, MeasurementPair};
use crate::error::{Error, Result};
use crate::geometry::{rotation, serde_vec2, Vec2};

/// Mean velocity error magnitude of a parameter set.
///
/// For each pair `v_a` is fixed to `h_a` and `ω_γ` is chosen to minimize
/// `‖e_b‖`. With `b = R(θ_ba)ᵀ h_b - h_a` the optimal `ω_γ` is
/// `perp(t) · b` and the remaining error is `|t · b|`.
pub fn velocity_error_metric(pairs: &[MeasurementPair], extrinsics: &Extrinsics) -> Result<f64> {
    if pairs.is_empty() {
        return Err(Error::EmptyInput("velocity error metric needs at least one pair".into()));
    }
    let rt = rotation(extrinsics.theta_ba).transpose();
    let axis = extrinsics.translation_axis();
    let total: f64 = pairs
        .iter()
        .map(|p| axis.dot(&(rt * p.h_b.velocity - p.h_a.velocity)).abs())
        .sum();
    Ok(total / pairs.len() as f64)
}

/// True radar velocities at one instant, each in its own radar frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TruthVelocity {
    #[serde(with = "serde_vec2")]
    pub a: Vec2,
    #[serde(with = "serde_vec2")]
    pub b: Vec2,
}

/// What raw and fused velocities are compared against.
#[derive(Debug, Clone, Copy)]
pub enum VelocityReference<'a> {
    /// Ground truth aligned index-for-index with the input pairs.
    Truth(&'a [TruthVelocity]),
    /// The fused (model-consistent) velocities themselves; fused errors are
    /// then zero and raw errors are the per-radar residual magnitudes.
    Model,
}

/// Raw and fused velocity error magnitudes (m/s) per radar, one entry per
/// time step used by the solver.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VelocityErrorSeries {
    pub timestamps: Vec<f64>,
    pub raw_a: Vec<f64>,
    pub fused_a: Vec<f64>,
    pub raw_b: Vec<f64>,
    pub fused_b: Vec<f64>,
}

pub fn fused_ego_velocities(
    report: &CalibrationReport,
    pairs: &[MeasurementPair],
    reference: VelocityReference<'_>,
) -> Result<VelocityErrorSeries> {
    if let VelocityReference::Truth(truth) = reference {
        if truth.len() != pairs.len() {
            return Err(Error::InvalidArgument(format!(
                "ground truth has {} entries for {} pairs",
                truth.len(),
                pairs.len()
            )));
        }
    }
    if report.used_indices.len() != report.fused_motion.len() {
        return Err(Error::InvalidArgument("report motion and index lengths differ".into()));
    }
    let model = StepModel::new(report.extrinsics.theta_t, report.extrinsics.theta_ba);
    let n = report.fused_motion.len();
    let mut out = VelocityErrorSeries {
        timestamps: Vec::with_capacity(n),
        raw_a: Vec::with_capacity(n),
        fused_a: Vec::with_capacity(n),
        raw_b: Vec::with_capacity(n),
        fused_b: Vec::with_capacity(n),
    };
    for (&idx, m) in report.used_indices.iter().zip(&report.fused_motion) {
        let pair = pairs.get(idx).ok_or_else(|| {
            Error::InvalidArgument(format!("report refers to pair {idx} beyond the input"))
        })?;
        let fused_a = m.v_a;
        let fused_b = model.predict_b(&m.v_a, m.omega_gamma);
        let (ref_a, ref_b) = match reference {
            VelocityReference::Truth(truth) => (truth[idx].a, truth[idx].b),
            VelocityReference::Model => (fused_a, fused_b),
        };
        out.timestamps.push(pair.timestamp);
        out.raw_a.push((pair.h_a.velocity - ref_a).norm());
        out.fused_a.push((fused_a - ref_a).norm());
        out.raw_b.push((pair.h_b.velocity - ref_b).norm());
        out.fused_b.push((fused_b - ref_b).norm());
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ego_velocity::EgoVelocityEstimate;
    use crate::geometry::{perp, unit};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    fn pairs_with_noise(ex: &Extrinsics, sigma: f64, seed: u64) -> Vec<MeasurementPair> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let noise = Normal::new(0.0, sigma.max(1e-300)).unwrap();
        (0..2000)
            .map(|i| {
                let t = i as f64 * 0.05;
                let v = Vec2::new(rng.random_range(0.2..2.0), rng.random_range(-1.0..1.0));
                let om = rng.random_range(-1.0..1.0);
                let hb = rotation(ex.theta_ba) * (perp(&unit(ex.theta_t)) * om + v);
                let mut n = || {
                    if sigma > 0.0 {
                        Vec2::new(noise.sample(&mut rng), noise.sample(&mut rng))
                    } else {
                        Vec2::zeros()
                    }
                };
                let na = n();
                let nb = n();
                MeasurementPair::new(
                    t,
                    EgoVelocityEstimate::isotropic(t, v + na, sigma),
                    EgoVelocityEstimate::isotropic(t, hb + nb, sigma),
                )
            })
            .collect()
    }

    #[test]
    fn metric_is_zero_at_truth_without_noise() {
        let ex = Extrinsics::new(1.1, -2.0);
        let pairs = pairs_with_noise(&ex, 0.0, 1);
        assert!(velocity_error_metric(&pairs, &ex).unwrap() < 1e-12);
    }

    #[test]
    fn metric_tracks_noise_level() {
        // The remaining error is |t · (Rᵀn_b - n_a)| ~ |N(0, 2σ²)|, whose mean
        // is 2σ/√π ≈ 1.128σ.
        let ex = Extrinsics::new(1.1, -2.0);
        let pairs = pairs_with_noise(&ex, 0.02, 2);
        let m = velocity_error_metric(&pairs, &ex).unwrap();
        let expected = 2.0 * 0.02 / std::f64::consts::PI.sqrt();
        assert!((m - expected).abs() / expected < 0.1, "{m}");
    }

    #[test]
    fn metric_grows_away_from_truth() {
        let ex = Extrinsics::new(1.1, -2.0);
        let pairs = pairs_with_noise(&ex, 0.02, 3);
        let at_truth = velocity_error_metric(&pairs, &ex).unwrap();
        let off = 10f64.to_radians();
        for (dt, db) in [(off, 0.0), (0.0, off), (-off, off)] {
            let wrong = Extrinsics::new(ex.theta_t + dt, ex.theta_ba + db);
            assert!(velocity_error_metric(&pairs, &wrong).unwrap() > at_truth);
        }
    }

    #[test]
    fn metric_rejects_empty_input() {
        assert!(velocity_error_metric(&[], &Extrinsics::new(0.0, 0.0)).is_err());
    }
}
