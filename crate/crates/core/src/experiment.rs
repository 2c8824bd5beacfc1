//! Monte-Carlo trials over a grid of noise levels and durations.

use std::f64::consts::{PI, TAU};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::calib::{fused_ego_velocities, solve_lm, velocity_error_metric, SolverOptions, VelocityReference};
use crate::error::{Error, Result};
use crate::geometry::{median, periodic_diff};
use crate::pipeline::is_moving;
use crate::simulator::{derive_seed, generate_trajectory, simulate_pairs, NoiseSpec, TrajectoryProfile};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub trials: usize,
    /// Ego-velocity noise levels, m/s.
    pub sigmas: Vec<f64>,
    /// Trajectory durations, seconds. Each overrides `trajectory.duration`.
    pub durations: Vec<f64>,
    pub seed: u64,
    pub trajectory: TrajectoryProfile,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            trials: 100,
            sigmas: vec![0.05, 0.1, 0.2],
            durations: vec![15.0, 30.0, 60.0, 120.0],
            seed: 0,
            trajectory: TrajectoryProfile::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 || self.sigmas.is_empty() || self.durations.is_empty() {
            return Err(Error::InvalidArgument(
                "experiment needs at least one trial, sigma and duration".into(),
            ));
        }
        if self.sigmas.iter().any(|s| !(*s >= 0.0 && s.is_finite())) {
            return Err(Error::InvalidArgument("sigmas must be non-negative".into()));
        }
        for &d in &self.durations {
            TrajectoryProfile { duration: d, ..self.trajectory.clone() }.validate()?;
        }
        Ok(())
    }

    /// Seed of one trial; depends only on the cell and trial index, not on
    /// the order of the grid.
    pub fn trial_seed(&self, sigma: f64, duration: f64, trial: usize) -> u64 {
        let cell = derive_seed(derive_seed(self.seed, sigma.to_bits()), duration.to_bits());
        derive_seed(cell, trial as u64)
    }
}

/// Absolute translation-axis error, rad, modulo π.
pub fn axis_error(estimate: f64, truth: f64) -> f64 {
    periodic_diff(estimate, truth, PI).abs()
}

/// Absolute yaw error, rad, modulo 2π.
pub fn yaw_error(estimate: f64, truth: f64) -> f64 {
    periodic_diff(estimate, truth, TAU).abs()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialMetrics {
    pub theta_t_error_deg: f64,
    pub theta_ba_error_deg: f64,
    pub converged: bool,
    pub iterations: usize,
    /// Medians over time steps of the velocity error magnitudes against
    /// ground truth, m/s.
    pub raw_error_a: f64,
    pub fused_error_a: f64,
    pub raw_error_b: f64,
    pub fused_error_b: f64,
    pub velocity_error_metric: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum TrialResult {
    Solved(TrialMetrics),
    Failed { reason: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialOutcome {
    pub sigma: f64,
    pub duration: f64,
    pub trial: usize,
    pub seed: u64,
    pub result: TrialResult,
}

/// Simulates, filters and calibrates one trial.
pub fn run_trial(
    config: &ExperimentConfig,
    sigma: f64,
    duration: f64,
    trial: usize,
    solver: &SolverOptions,
    min_speed: f64,
) -> Result<TrialOutcome> {
    let seed = config.trial_seed(sigma, duration, trial);
    let profile = TrajectoryProfile { duration, ..config.trajectory.clone() };
    let truth = generate_trajectory(&profile)?;
    let noise = NoiseSpec { sigma_r: sigma, rng_seed: seed, ..NoiseSpec::default() };
    let all = simulate_pairs(&truth, &noise)?;
    let truth_vel = truth.truth_velocities();
    let (pairs, reference): (Vec<_>, Vec<_>) = all
        .iter()
        .zip(&truth_vel)
        .filter(|(p, _)| is_moving(p, min_speed))
        .map(|(p, t)| (*p, *t))
        .unzip();

    let result = match solve_lm(&pairs, solver) {
        Ok(report) => {
            let series = fused_ego_velocities(&report, &pairs, VelocityReference::Truth(&reference))?;
            let med = |v: &[f64]| median(v).unwrap_or(f64::NAN);
            TrialResult::Solved(TrialMetrics {
                theta_t_error_deg: axis_error(report.extrinsics.theta_t, truth.extrinsics.theta_t).to_degrees(),
                theta_ba_error_deg: yaw_error(report.extrinsics.theta_ba, truth.extrinsics.theta_ba)
                    .to_degrees(),
                converged: report.converged,
                iterations: report.iterations,
                raw_error_a: med(&series.raw_a),
                fused_error_a: med(&series.fused_a),
                raw_error_b: med(&series.raw_b),
                fused_error_b: med(&series.fused_b),
                velocity_error_metric: velocity_error_metric(&pairs, &report.extrinsics)?,
            })
        }
        Err(e @ (Error::Unidentifiable { .. } | Error::InsufficientData(_) | Error::DegenerateGeometry(_))) => {
            TrialResult::Failed { reason: e.to_string() }
        }
        Err(e) => return Err(e),
    };
    Ok(TrialOutcome { sigma, duration, trial, seed, result })
}

/// Medians over the solved trials of one grid cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellSummary {
    pub sigma: f64,
    pub duration: f64,
    pub n_trials: usize,
    pub n_failed: usize,
    pub n_unconverged: usize,
    pub median_theta_t_error_deg: f64,
    pub median_theta_ba_error_deg: f64,
    pub median_raw_error_a: f64,
    pub median_fused_error_a: f64,
    pub median_raw_error_b: f64,
    pub median_fused_error_b: f64,
    pub median_velocity_error_metric: f64,
}

impl CellSummary {
    pub fn from_trials(sigma: f64, duration: f64, trials: &[&TrialOutcome]) -> Self {
        let solved: Vec<&TrialMetrics> = trials
            .iter()
            .filter_map(|t| match &t.result {
                TrialResult::Solved(m) => Some(m),
                TrialResult::Failed { .. } => None,
            })
            .collect();
        let med = |f: fn(&TrialMetrics) -> f64| {
            median(&solved.iter().map(|m| f(m)).collect::<Vec<_>>()).unwrap_or(f64::NAN)
        };
        Self {
            sigma,
            duration,
            n_trials: trials.len(),
            n_failed: trials.len() - solved.len(),
            n_unconverged: solved.iter().filter(|m| !m.converged).count(),
            median_theta_t_error_deg: med(|m| m.theta_t_error_deg),
            median_theta_ba_error_deg: med(|m| m.theta_ba_error_deg),
            median_raw_error_a: med(|m| m.raw_error_a),
            median_fused_error_a: med(|m| m.fused_error_a),
            median_raw_error_b: med(|m| m.raw_error_b),
            median_fused_error_b: med(|m| m.fused_error_b),
            median_velocity_error_metric: med(|m| m.velocity_error_metric),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentResults {
    pub cells: Vec<CellSummary>,
    pub trials: Vec<TrialOutcome>,
}

/// Runs every (σ, duration, trial) combination, trials in parallel on
/// `jobs` threads (all cores when `None`). Results are identical for any
/// thread count.
pub fn run_matrix(
    config: &ExperimentConfig,
    solver: &SolverOptions,
    min_speed: f64,
    jobs: Option<usize>,
) -> Result<ExperimentResults> {
    config.validate()?;
    let tasks: Vec<(f64, f64, usize)> = config
        .sigmas
        .iter()
        .flat_map(|&s| {
            config
                .durations
                .iter()
                .flat_map(move |&d| (0..config.trials).map(move |k| (s, d, k)))
        })
        .collect();
    let work = || {
        tasks
            .par_iter()
            .map(|&(s, d, k)| run_trial(config, s, d, k, solver, min_speed))
            .collect::<Result<Vec<_>>>()
    };
    let trials = match jobs {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build()
            .map_err(|e| Error::InvalidArgument(e.to_string()))?
            .install(work)?,
        None => work()?,
    };
    let cells = trials
        .chunks(config.trials)
        .map(|chunk| {
            let refs: Vec<&TrialOutcome> = chunk.iter().collect();
            CellSummary::from_trials(chunk[0].sigma, chunk[0].duration, &refs)
        })
        .collect();
    Ok(ExperimentResults { cells, trials })
}
