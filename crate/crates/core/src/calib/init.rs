//! Closed-form initialization of the batch problem.

use std::f64::consts::{PI, TAU};

use nalgebra::{Matrix3, Vector3};

use super::problem::{b_design, pair_weights, StepModel};
use super::{Extrinsics, MeasurementPair, MotionState};
use crate::error::{Error, Result};
use crate::geometry::{axis_angle, circular_median, cross, rotation, Vec2};

/// Number of similar-magnitude pairs used for the yaw initialization:
/// `min(50, M / 4)`, at least one.
pub fn default_k(num_pairs: usize) -> usize {
    (num_pairs / 4).clamp(1, 50)
}

/// Initial yaw from the `k` pairs whose speeds are most alike.
///
/// For each selected pair the signed angle from `h_a` to `h_b` is computed
/// from the normalized cross and dot products; the result is their circular
/// median.
pub fn init_rotation(pairs: &[MeasurementPair], k: usize) -> Result<f64> {
    if k == 0 {
        return Err(Error::InvalidArgument("k must be positive".into()));
    }
    let mut usable: Vec<(f64, f64)> = pairs
        .iter()
        .filter_map(|p| {
            let (a, b) = (p.h_a.velocity, p.h_b.velocity);
            let (na, nb) = (a.norm(), b.norm());
            if na <= f64::EPSILON || nb <= f64::EPSILON {
                return None;
            }
            let (ua, ub) = (a / na, b / nb);
            Some(((na - nb).abs(), cross(&ua, &ub).atan2(ua.dot(&ub))))
        })
        .collect();
    if usable.len() < k {
        return Err(Error::InsufficientData(format!(
            "yaw initialization needs {k} moving pairs, got {}",
            usable.len()
        )));
    }
    usable.sort_by(|x, y| x.0.total_cmp(&y.0));
    let angles: Vec<f64> = usable[..k].iter().map(|&(_, angle)| angle).collect();
    Ok(circular_median(&angles, TAU).expect("k > 0"))
}

/// Initial translation axis in `[0, π)` given the yaw.
///
/// `b = R(θ_ba)ᵀ h_b - h_a = ω_γ · perp(t) + noise`, so `t` is parallel to
/// `b` turned by -90°; the sign of `ω_γ` drops out once the angle is folded
/// onto `[0, π)`. Pairs with `‖b‖ < min_norm` carry no usable lever-arm
/// signal and are skipped.
pub fn init_translation_axis(
    pairs: &[MeasurementPair],
    theta_ba: f64,
    min_norm: f64,
) -> Result<f64> {
    let rt = rotation(theta_ba).transpose();
    let axes: Vec<f64> = pairs
        .iter()
        .filter_map(|p| {
            let b = rt * p.h_b.velocity - p.h_a.velocity;
            let n = b.norm();
            (n >= min_norm && n > 0.0).then(|| axis_angle((-b.x / n).atan2(b.y / n)))
        })
        .collect();
    if axes.is_empty() {
        return Err(Error::InsufficientExcitation(format!(
            "no pair shows a lever-arm velocity of at least {min_norm} m/s; the platform is not rotating"
        )));
    }
    let m = circular_median(&axes, PI).expect("non-empty");
    Ok(axis_angle(m))
}

/// Per-instant weighted least-squares solve for `(v_a, ω_γ)` with the
/// extrinsics held fixed. `None` marks a time step whose 3×3 normal matrix
/// is singular.
pub fn init_motion_states(
    pairs: &[MeasurementPair],
    extrinsics: &Extrinsics,
    covariance_floor: f64,
) -> Result<Vec<Option<MotionState>>> {
    Ok(closed_form_steps(pairs, extrinsics, covariance_floor)?
        .into_iter()
        .map(|s| s.map(|(m, _)| m))
        .collect())
}

/// Closed-form motion state and whitened squared residual of every step.
fn closed_form_steps(
    pairs: &[MeasurementPair],
    extrinsics: &Extrinsics,
    covariance_floor: f64,
) -> Result<Vec<Option<(MotionState, f64)>>> {
    let weights = pair_weights(pairs, covariance_floor)?;
    let model = StepModel::new(extrinsics.theta_t, extrinsics.theta_ba);
    let db = b_design(&model);
    Ok(pairs
        .iter()
        .zip(&weights)
        .map(|(p, w)| {
            // whitened design: [W_a · [I 0]; W_b · D_b]
            let mut da = nalgebra::Matrix2x3::zeros();
            da.fixed_view_mut::<2, 2>(0, 0).copy_from(&w.a);
            let dbw = w.b * db;
            let (ya, yb) = (w.a * p.h_a.velocity, w.b * p.h_b.velocity);
            let normal: Matrix3<f64> = da.transpose() * da + dbw.transpose() * dbw;
            let rhs: Vector3<f64> = da.transpose() * ya + dbw.transpose() * yb;
            let x = normal.cholesky()?.solve(&rhs);
            if !x.iter().all(|v| v.is_finite()) {
                return None;
            }
            let sq = (ya - da * x).norm_squared() + (yb - dbw * x).norm_squared();
            Some((MotionState::new(Vec2::new(x[0], x[1]), x[2]), sq))
        })
        .collect())
}

/// Cost with the motion states solved in closed form for fixed extrinsics.
/// Steps without a unique solution are skipped.
pub fn profile_cost(pairs: &[MeasurementPair], extrinsics: &Extrinsics, covariance_floor: f64) -> Result<f64> {
    Ok(closed_form_steps(pairs, extrinsics, covariance_floor)?
        .into_iter()
        .flatten()
        .map(|(_, sq)| sq)
        .sum())
}

/// Number of evenly spaced yaws checked against the similar-speed estimate.
pub const YAW_SCAN_STEPS: usize = 36;

/// Initial extrinsics for the solver.
///
/// Candidates are the similar-speed yaw estimate and `YAW_SCAN_STEPS` evenly
/// spaced yaws, each paired with its closed-form translation axis; the one
/// with the lowest profile cost is returned.
pub fn init_extrinsics(
    pairs: &[MeasurementPair],
    k: usize,
    axis_min_norm: f64,
    covariance_floor: f64,
) -> Result<Extrinsics> {
    let theta_ba = init_rotation(pairs, k)?;
    let theta_t = init_translation_axis(pairs, theta_ba, axis_min_norm)?;
    let mut best = Extrinsics::new(theta_t, theta_ba);
    let mut best_cost = profile_cost(pairs, &best, covariance_floor)?;
    for i in 0..YAW_SCAN_STEPS {
        let yaw = -PI + TAU * (i as f64 + 0.5) / YAW_SCAN_STEPS as f64;
        let Ok(axis) = init_translation_axis(pairs, yaw, axis_min_norm) else {
            continue;
        };
        let candidate = Extrinsics::new(axis, yaw);
        let c = profile_cost(pairs, &candidate, covariance_floor)?;
        if c < best_cost {
            best = candidate;
            best_cost = c;
        }
    }
    Ok(best)
}
