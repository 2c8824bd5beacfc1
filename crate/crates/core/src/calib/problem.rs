use nalgebra::{DMatrix, DVector, Matrix2x3, SMatrix, Vector4};

use super::{CalibState, MeasurementPair};
use crate::error::{Error, Result};
use crate::geometry::{perp, rotation, unit, Mat2, Vec2};

/// Added to every ego-velocity covariance before inversion, (m/s)².
pub const DEFAULT_COVARIANCE_FLOOR: f64 = 1e-6;

pub(crate) type Block4x3 = SMatrix<f64, 4, 3>;
pub(crate) type Block4x2 = SMatrix<f64, 4, 2>;

/// Whitening factors `L` with `LᵀL = (Σ + λI)⁻¹` for both radars of a pair.
#[derive(Debug, Clone, Copy)]
pub(crate) struct PairWeights {
    pub a: Mat2,
    pub b: Mat2,
}

pub(crate) fn whitening(cov: &Mat2, floor: f64) -> Result<Mat2> {
    let sym_err = (cov[(0, 1)] - cov[(1, 0)]).abs();
    let scale = cov.abs().max().max(1e-300);
    if !cov.iter().all(|x| x.is_finite()) || sym_err > 1e-9 * scale {
        return Err(Error::InvalidWeight(format!(
            "covariance {cov:?} is not a finite symmetric matrix"
        )));
    }
    let det = cov[(0, 0)] * cov[(1, 1)] - cov[(0, 1)] * cov[(1, 0)];
    if cov[(0, 0)] < 0.0 || cov[(1, 1)] < 0.0 || det < -1e-12 * scale * scale {
        return Err(Error::InvalidWeight(format!(
            "covariance {cov:?} is not positive semi-definite"
        )));
    }
    let floored = cov + Mat2::identity() * floor;
    let info = floored
        .try_inverse()
        .ok_or_else(|| Error::InvalidWeight("covariance is singular after flooring".into()))?;
    let info = 0.5 * (info + info.transpose());
    // info = C Cᵀ with C lower triangular; Cᵀ e has squared norm eᵀ info e.
    let chol = info
        .cholesky()
        .ok_or_else(|| Error::InvalidWeight("information matrix is not positive definite".into()))?;
    Ok(chol.l().transpose())
}

pub(crate) fn pair_weights(pairs: &[MeasurementPair], floor: f64) -> Result<Vec<PairWeights>> {
    pairs
        .iter()
        .map(|p| {
            Ok(PairWeights {
                a: whitening(&p.h_a.covariance, floor)?,
                b: whitening(&p.h_b.covariance, floor)?,
            })
        })
        .collect()
}

/// Evaluates residuals and derivatives for one time step.
pub(crate) struct StepModel {
    rot: Mat2,
    axis: Vec2,
    axis_perp: Vec2,
}

impl StepModel {
    pub fn new(theta_t: f64, theta_ba: f64) -> Self {
        let axis = unit(theta_t);
        Self {
            rot: rotation(theta_ba),
            axis,
            axis_perp: perp(&axis),
        }
    }

    /// Predicted radar-b velocity in its own frame.
    pub fn predict_b(&self, v_a: &Vec2, omega_gamma: f64) -> Vec2 {
        self.rot * (self.axis_perp * omega_gamma + v_a)
    }

    pub fn residual(&self, pair: &MeasurementPair, w: &PairWeights, v: &Vec2, om: f64) -> Vector4<f64> {
        let ea = w.a * (pair.h_a.velocity - v);
        let eb = w.b * (pair.h_b.velocity - self.predict_b(v, om));
        Vector4::new(ea.x, ea.y, eb.x, eb.y)
    }

    pub fn jacobian(&self, w: &PairWeights, v: &Vec2, om: f64) -> (Block4x3, Block4x2) {
        let wr = w.b * self.rot;
        let mut dm = Block4x3::zeros();
        dm.fixed_view_mut::<2, 2>(0, 0).copy_from(&(-w.a));
        dm.fixed_view_mut::<2, 2>(2, 0).copy_from(&(-wr));
        dm.fixed_view_mut::<2, 1>(2, 2).copy_from(&(-(wr * self.axis_perp)));

        let mut de = Block4x2::zeros();
        // d perp(t) / dθ_t = -t
        de.fixed_view_mut::<2, 1>(2, 0).copy_from(&(wr * self.axis * om));
        // d R / dθ_ba = R · skew(1)
        let inner = self.axis_perp * om + v;
        de.fixed_view_mut::<2, 1>(2, 1).copy_from(&(-(wr * perp(&inner))));
        (dm, de)
    }
}

fn check_lengths(state: &CalibState, pairs: &[MeasurementPair]) -> Result<()> {
    if state.motion.len() != pairs.len() {
        return Err(Error::InvalidArgument(format!(
            "state has {} motion entries but there are {} pairs",
            state.motion.len(),
            pairs.len()
        )));
    }
    Ok(())
}

/// Whitened residual vector of length `4M`; its squared norm is the weighted
/// batch objective.
pub fn residuals(state: &CalibState, pairs: &[MeasurementPair]) -> Result<DVector<f64>> {
    check_lengths(state, pairs)?;
    let weights = pair_weights(pairs, DEFAULT_COVARIANCE_FLOOR)?;
    Ok(residuals_weighted(state, pairs, &weights))
}

pub(crate) fn residuals_weighted(
    state: &CalibState,
    pairs: &[MeasurementPair],
    weights: &[PairWeights],
) -> DVector<f64> {
    let model = StepModel::new(state.extrinsics.theta_t, state.extrinsics.theta_ba);
    let mut out = DVector::zeros(4 * pairs.len());
    for (j, ((pair, w), m)) in pairs.iter().zip(weights).zip(&state.motion).enumerate() {
        let r = model.residual(pair, w, &m.v_a, m.omega_gamma);
        out.fixed_rows_mut::<4>(4 * j).copy_from(&r);
    }
    out
}

/// Weighted batch objective `Σ eₐᵀΣₐ⁻¹eₐ + e_bᵀΣ_b⁻¹e_b`.
pub fn cost(state: &CalibState, pairs: &[MeasurementPair]) -> Result<f64> {
    Ok(residuals(state, pairs)?.norm_squared())
}

/// Same objective with the translation left unconstrained: `ω^j` and `t`
/// enter only through their product `ω^j · t`.
pub fn unconstrained_objective(
    pairs: &[MeasurementPair],
    velocities: &[Vec2],
    omegas: &[f64],
    translation: &Vec2,
    theta_ba: f64,
) -> Result<f64> {
    if velocities.len() != pairs.len() || omegas.len() != pairs.len() {
        return Err(Error::InvalidArgument("state length does not match pairs".into()));
    }
    let weights = pair_weights(pairs, DEFAULT_COVARIANCE_FLOOR)?;
    let rot = rotation(theta_ba);
    let mut total = 0.0;
    for (((pair, w), v), om) in pairs.iter().zip(&weights).zip(velocities).zip(omegas) {
        let ea = w.a * (pair.h_a.velocity - v);
        let eb = w.b * (pair.h_b.velocity - rot * (perp(translation) * *om + v));
        total += ea.norm_squared() + eb.norm_squared();
    }
    Ok(total)
}

/// Block-sparse Jacobian of the whitened residuals. Time step `j` owns rows
/// `4j..4j+4`; its motion block covers columns `3j..3j+3` and the shared
/// extrinsic block covers the last two columns `(θ_t, θ_ba)`.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockJacobian {
    pub motion_blocks: Vec<SMatrix<f64, 4, 3>>,
    pub extrinsic_blocks: Vec<SMatrix<f64, 4, 2>>,
}

impl BlockJacobian {
    pub fn rows(&self) -> usize {
        4 * self.motion_blocks.len()
    }

    pub fn cols(&self) -> usize {
        3 * self.motion_blocks.len() + 2
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let m = self.motion_blocks.len();
        let mut out = DMatrix::zeros(self.rows(), self.cols());
        for j in 0..m {
            out.view_mut((4 * j, 3 * j), (4, 3))
                .copy_from(&self.motion_blocks[j]);
            out.view_mut((4 * j, 3 * m), (4, 2))
                .copy_from(&self.extrinsic_blocks[j]);
        }
        out
    }
}

pub fn jacobian(state: &CalibState, pairs: &[MeasurementPair]) -> Result<BlockJacobian> {
    check_lengths(state, pairs)?;
    let weights = pair_weights(pairs, DEFAULT_COVARIANCE_FLOOR)?;
    Ok(jacobian_weighted(state, &weights))
}

pub(crate) fn jacobian_weighted(state: &CalibState, weights: &[PairWeights]) -> BlockJacobian {
    let model = StepModel::new(state.extrinsics.theta_t, state.extrinsics.theta_ba);
    let (motion_blocks, extrinsic_blocks) = state
        .motion
        .iter()
        .zip(weights)
        .map(|(m, w)| model.jacobian(w, &m.v_a, m.omega_gamma))
        .unzip();
    BlockJacobian {
        motion_blocks,
        extrinsic_blocks,
    }
}

/// Linear map from the per-step motion `(v_a, ω_γ)` to the unweighted
/// prediction of radar b, used by the closed-form motion solve.
pub(crate) fn b_design(model: &StepModel) -> Matrix2x3<f64> {
    let mut d = Matrix2x3::zeros();
    d.fixed_view_mut::<2, 2>(0, 0).copy_from(&model.rot);
    d.fixed_view_mut::<2, 1>(0, 2).copy_from(&(model.rot * model.axis_perp));
    d
}
