//! Levenberg–Marquardt on the block-sparse calibration problem.
//!
//! Each time step couples only its own `(v_a, ω_γ)` with the two shared
//! angles, so the normal equations are an arrow matrix: 3×3 diagonal blocks
//! plus a 2×2 extrinsic corner. Each damped step eliminates the motion blocks
//! and solves the 2×2 Schur complement for the angles.

use nalgebra::{Matrix2, Matrix2x3, Matrix3, SymmetricEigen, Vector2, Vector3};
use serde::{Deserialize, Serialize};

use super::init::{default_k, init_extrinsics, init_motion_states};
use super::problem::{jacobian_weighted, pair_weights, residuals_weighted, PairWeights};
use super::{CalibState, Extrinsics, MeasurementPair, MotionState, DEFAULT_COVARIANCE_FLOOR};
use crate::error::{Error, Result};
use crate::geometry::{axis_angle, serde_mat2, signed_angle, Mat2};
use crate::identifiability::{excitation_report, ExcitationReport, ExcitationThresholds};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverOptions {
    pub max_iterations: usize,
    pub initial_lambda: f64,
    /// Stop once the ∞-norm of the gradient drops below this.
    pub gradient_tolerance: f64,
    /// Stop once an accepted step lowers the cost by less than this fraction.
    pub relative_cost_tolerance: f64,
    /// Stop once the step is this small relative to the state.
    pub step_tolerance: f64,
    /// Similar-magnitude pairs used for the yaw initialization; `None` uses
    /// [`default_k`].
    pub k_pairs: Option<usize>,
    /// Minimum lever-arm speed (m/s) for a pair to vote on the translation axis.
    pub axis_min_norm: f64,
    pub covariance_floor: f64,
    /// Refuse to solve when the initialized problem fails the excitation check.
    pub enforce_excitation: bool,
    pub excitation: ExcitationThresholds,
    /// Smallest-to-largest eigenvalue ratio of the marginal extrinsic
    /// information below which the solution is reported as not converged.
    pub flat_ratio: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            max_iterations: 100,
            initial_lambda: 1e-3,
            gradient_tolerance: 1e-8,
            relative_cost_tolerance: 1e-12,
            step_tolerance: 1e-12,
            k_pairs: None,
            axis_min_norm: 0.05,
            covariance_floor: DEFAULT_COVARIANCE_FLOOR,
            enforce_excitation: true,
            excitation: ExcitationThresholds::default(),
            flat_ratio: 1e-6,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    GradientTolerance,
    CostTolerance,
    StepTolerance,
    MaxIterations,
    /// Damping grew without finding a cost decrease.
    DampingOverflow,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationReport {
    pub extrinsics: Extrinsics,
    pub initial_extrinsics: Extrinsics,
    /// Marginal covariance of `(θ_t, θ_ba)`; absent when the marginal
    /// information is singular.
    #[serde(with = "option_mat2")]
    pub extrinsic_covariance: Option<Mat2>,
    #[serde(with = "serde_mat2")]
    pub extrinsic_information: Mat2,
    /// Eigenvector of the smallest information eigenvalue when the problem is
    /// flat along it.
    pub flat_direction: Option<[f64; 2]>,
    pub initial_cost: f64,
    pub final_cost: f64,
    /// Cost after each accepted step, starting with the initial cost.
    pub cost_history: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub termination: Termination,
    pub excitation: ExcitationReport,
    /// Motion states at the solution, consistent with the wrapped extrinsics.
    pub fused_motion: Vec<MotionState>,
    pub timestamps: Vec<f64>,
    /// Index into the input pairs for every entry of `fused_motion`.
    pub used_indices: Vec<usize>,
}

mod option_mat2 {
    use super::Mat2;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(m: &Option<Mat2>, s: S) -> Result<S::Ok, S::Error> {
        m.map(|m| [[m[(0, 0)], m[(0, 1)]], [m[(1, 0)], m[(1, 1)]]])
            .serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<Mat2>, D::Error> {
        Ok(Option::<[[f64; 2]; 2]>::deserialize(d)?.map(|[[a, b], [c, e]]| Mat2::new(a, b, c, e)))
    }
}

/// Initializes and solves the calibration problem.
pub fn solve_lm(pairs: &[MeasurementPair], options: &SolverOptions) -> Result<CalibrationReport> {
    if pairs.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "calibration needs at least 2 pairs, got {}",
            pairs.len()
        )));
    }
    let k = options.k_pairs.unwrap_or_else(|| default_k(pairs.len()));
    let initial = match init_extrinsics(pairs, k, options.axis_min_norm, options.covariance_floor) {
        Ok(e) => e,
        Err(Error::InsufficientExcitation(reason)) => {
            return Err(Error::Unidentifiable {
                reason,
                excitation: None,
            })
        }
        Err(e) => return Err(e),
    };
    solve_lm_from(pairs, initial, options)
}

/// Solves starting from the given extrinsics; motion states are initialized
/// in closed form.
pub fn solve_lm_from(
    pairs: &[MeasurementPair],
    initial: Extrinsics,
    options: &SolverOptions,
) -> Result<CalibrationReport> {
    let initial_states = init_motion_states(pairs, &initial, options.covariance_floor)?;
    let mut used_indices = Vec::new();
    let mut motion = Vec::new();
    for (i, s) in initial_states.into_iter().enumerate() {
        if let Some(s) = s {
            used_indices.push(i);
            motion.push(s);
        }
    }
    if motion.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "only {} usable time steps after initialization",
            motion.len()
        )));
    }
    let used: Vec<MeasurementPair> = used_indices.iter().map(|&i| pairs[i]).collect();

    if options.enforce_excitation {
        let report = excitation_report(&used, &initial, &options.excitation)?;
        if report.fraction_degenerate > options.excitation.max_degenerate_fraction {
            return Err(Error::Unidentifiable {
                reason: format!(
                    "{:.1}% of time steps are degenerate (limit {:.1}%)",
                    100.0 * report.fraction_degenerate,
                    100.0 * options.excitation.max_degenerate_fraction
                ),
                excitation: Some(Box::new(report)),
            });
        }
    }

    let weights = pair_weights(&used, options.covariance_floor)?;
    let state = CalibState {
        motion,
        extrinsics: Extrinsics {
            theta_t: initial.theta_t,
            theta_ba: initial.theta_ba,
        },
    };
    let outcome = levenberg_marquardt(state, &used, &weights, options);

    let mut state = outcome.state;
    normalize(&mut state);
    let normal = NormalEquations::build(&state, &used, &weights);
    let information = normal.marginal_information();
    let eig = SymmetricEigen::new(information);
    let (lo, hi) = if eig.eigenvalues[0] <= eig.eigenvalues[1] {
        (0, 1)
    } else {
        (1, 0)
    };
    let ratio = eig.eigenvalues[lo] / eig.eigenvalues[hi].abs().max(f64::MIN_POSITIVE);
    let flat = !(ratio >= options.flat_ratio);
    let flat_direction = flat.then(|| {
        let v = eig.eigenvectors.column(lo);
        [v[0], v[1]]
    });
    let extrinsic_covariance = if eig.eigenvalues[lo] > 0.0 {
        information.try_inverse().map(|c| 0.5 * (c + c.transpose()))
    } else {
        None
    };
    let excitation = excitation_report(&used, &state.extrinsics, &options.excitation)?;

    let converged = outcome.termination != Termination::MaxIterations
        && outcome.termination != Termination::DampingOverflow
        && !flat;

    Ok(CalibrationReport {
        extrinsics: state.extrinsics,
        initial_extrinsics: initial,
        extrinsic_covariance,
        extrinsic_information: information,
        flat_direction,
        initial_cost: outcome.cost_history[0],
        final_cost: *outcome.cost_history.last().expect("non-empty"),
        cost_history: outcome.cost_history,
        iterations: outcome.iterations,
        converged,
        termination: outcome.termination,
        excitation,
        fused_motion: state.motion,
        timestamps: used.iter().map(|p| p.timestamp).collect(),
        used_indices,
    })
}

/// Folds `θ_t` onto `[0, π)` (flipping the sign of every `ω_γ` when the
/// axis turns by an odd multiple of π) and `θ_ba` onto `(-π, π]`.
fn normalize(state: &mut CalibState) {
    let raw = state.extrinsics.theta_t;
    let wrapped = axis_angle(raw);
    let turns = ((raw - wrapped) / std::f64::consts::PI).round() as i64;
    if turns.rem_euclid(2) == 1 {
        for m in &mut state.motion {
            m.omega_gamma = -m.omega_gamma;
        }
    }
    state.extrinsics = Extrinsics {
        theta_t: wrapped,
        theta_ba: signed_angle(state.extrinsics.theta_ba),
    };
}

struct LmOutcome {
    state: CalibState,
    cost_history: Vec<f64>,
    iterations: usize,
    termination: Termination,
}

/// Gauss–Newton normal equations in arrow form.
struct NormalEquations {
    motion_hessian: Vec<Matrix3<f64>>,
    coupling: Vec<Matrix2x3<f64>>,
    extrinsic_hessian: Matrix2<f64>,
    motion_gradient: Vec<Vector3<f64>>,
    extrinsic_gradient: Vector2<f64>,
}

impl NormalEquations {
    fn build(state: &CalibState, pairs: &[MeasurementPair], weights: &[PairWeights]) -> Self {
        let jac = jacobian_weighted(state, weights);
        let res = residuals_weighted(state, pairs, weights);
        let m = state.motion.len();
        let mut motion_hessian = Vec::with_capacity(m);
        let mut coupling = Vec::with_capacity(m);
        let mut motion_gradient = Vec::with_capacity(m);
        let mut extrinsic_hessian = Matrix2::zeros();
        let mut extrinsic_gradient = Vector2::zeros();
        for j in 0..m {
            let jm = &jac.motion_blocks[j];
            let je = &jac.extrinsic_blocks[j];
            let r = res.fixed_rows::<4>(4 * j);
            motion_hessian.push(jm.transpose() * jm);
            coupling.push(je.transpose() * jm);
            motion_gradient.push(jm.transpose() * r);
            extrinsic_hessian += je.transpose() * je;
            extrinsic_gradient += je.transpose() * r;
        }
        Self {
            motion_hessian,
            coupling,
            extrinsic_hessian,
            motion_gradient,
            extrinsic_gradient,
        }
    }

    fn gradient_inf_norm(&self) -> f64 {
        self.motion_gradient
            .iter()
            .flat_map(|g| g.iter())
            .chain(self.extrinsic_gradient.iter())
            .fold(0.0f64, |acc, x| acc.max(x.abs()))
    }

    /// Solves `(H + λ·diag(H)) δ = -g`; `None` when a damped block is not
    /// positive definite.
    fn damped_step(&self, lambda: f64) -> Option<(Vec<Vector3<f64>>, Vector2<f64>)> {
        let damp3 = |h: &Matrix3<f64>| {
            let mut d = *h;
            for i in 0..3 {
                d[(i, i)] += lambda * h[(i, i)].max(1e-12);
            }
            d
        };
        let mut schur = self.extrinsic_hessian;
        for i in 0..2 {
            schur[(i, i)] += lambda * self.extrinsic_hessian[(i, i)].max(1e-12);
        }
        let mut rhs = -self.extrinsic_gradient;
        let mut factors = Vec::with_capacity(self.motion_hessian.len());
        for ((h, c), g) in self
            .motion_hessian
            .iter()
            .zip(&self.coupling)
            .zip(&self.motion_gradient)
        {
            let chol = damp3(h).cholesky()?;
            let hinv_ct = chol.solve(&c.transpose());
            let hinv_g = chol.solve(g);
            schur -= c * hinv_ct;
            rhs += c * hinv_g;
            factors.push((hinv_ct, hinv_g));
        }
        let schur = 0.5 * (schur + schur.transpose());
        let de = schur.cholesky()?.solve(&rhs);
        let dm = factors
            .iter()
            .map(|(hinv_ct, hinv_g)| -hinv_g - hinv_ct * de)
            .collect();
        Some((dm, de))
    }

    /// Undamped Schur complement onto the extrinsics: the information of
    /// `(θ_t, θ_ba)` with the motion states marginalized out.
    fn marginal_information(&self) -> Matrix2<f64> {
        let mut s = self.extrinsic_hessian;
        for (h, c) in self.motion_hessian.iter().zip(&self.coupling) {
            if let Some(inv) = h.try_inverse() {
                s -= c * inv * c.transpose();
            }
        }
        0.5 * (s + s.transpose())
    }
}

fn apply_step(state: &CalibState, dm: &[Vector3<f64>], de: &Vector2<f64>) -> CalibState {
    CalibState {
        motion: state
            .motion
            .iter()
            .zip(dm)
            .map(|(m, d)| MotionState::new(m.v_a + d.fixed_rows::<2>(0), m.omega_gamma + d[2]))
            .collect(),
        extrinsics: Extrinsics {
            theta_t: state.extrinsics.theta_t + de[0],
            theta_ba: state.extrinsics.theta_ba + de[1],
        },
    }
}

fn state_norm(state: &CalibState) -> f64 {
    let motion: f64 = state
        .motion
        .iter()
        .map(|m| m.v_a.norm_squared() + m.omega_gamma * m.omega_gamma)
        .sum();
    (motion + state.extrinsics.theta_t.powi(2) + state.extrinsics.theta_ba.powi(2)).sqrt()
}

fn levenberg_marquardt(
    mut state: CalibState,
    pairs: &[MeasurementPair],
    weights: &[PairWeights],
    options: &SolverOptions,
) -> LmOutcome {
    let mut cost = residuals_weighted(&state, pairs, weights).norm_squared();
    let mut cost_history = vec![cost];
    let mut lambda = options.initial_lambda;
    let mut iterations = 0;

    let termination = loop {
        if iterations >= options.max_iterations {
            break Termination::MaxIterations;
        }
        let normal = NormalEquations::build(&state, pairs, weights);
        if normal.gradient_inf_norm() < options.gradient_tolerance {
            break Termination::GradientTolerance;
        }
        iterations += 1;

        let mut accepted = None;
        while lambda <= 1e16 {
            let Some((dm, de)) = normal.damped_step(lambda) else {
                lambda *= 10.0;
                continue;
            };
            let candidate = apply_step(&state, &dm, &de);
            let new_cost = residuals_weighted(&candidate, pairs, weights).norm_squared();
            if new_cost.is_finite() && new_cost < cost {
                let step_sq: f64 =
                    dm.iter().map(|d| d.norm_squared()).sum::<f64>() + de.norm_squared();
                accepted = Some((candidate, new_cost, step_sq.sqrt()));
                lambda = (lambda / 10.0).max(1e-12);
                break;
            }
            lambda *= 10.0;
        }

        let Some((candidate, new_cost, step)) = accepted else {
            // No decrease at any damping: the iterate is a stationary point
            // up to rounding unless the gradient says otherwise.
            break Termination::DampingOverflow;
        };
        let decrease = (cost - new_cost) / cost.max(f64::MIN_POSITIVE);
        state = candidate;
        cost = new_cost;
        cost_history.push(cost);
        log::trace!("lm iter {iterations}: cost {cost:.6e} lambda {lambda:.1e}");
        if decrease < options.relative_cost_tolerance {
            break Termination::CostTolerance;
        }
        if step < options.step_tolerance * (state_norm(&state) + options.step_tolerance) {
            break Termination::StepTolerance;
        }
    };

    LmOutcome {
        state,
        cost_history,
        iterations,
        termination,
    }
}
