//! The `radar-calib` command line.
//!
//! | exit code | meaning |
//! |-----------|---------|
//! | 0 | success |
//! | 1 | other failure |
//! | 2 | usage error or invalid argument |
//! | 3 | I/O, parse or serialization failure |
//! | 4 | unidentifiable: insufficient excitation |
//! | 5 | no RANSAC consensus |
//! | 6 | solver did not converge (report still written) |
//!
//! Every command writes only below its `--out` directory and records the
//! resolved configuration and seed in its output.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::calib::{
    fused_ego_velocities, init_extrinsics, init_rotation, solve_lm, velocity_error_metric,
    default_k, Extrinsics, MeasurementPair, VelocityReference,
};
use crate::error::Error;
use crate::experiment::{run_matrix, ExperimentResults};
use crate::identifiability::{excitation_report, ExcitationReport};
use crate::pipeline::{
    filter_pairs, load_pairs, load_scans, prepare_pairs, read_json, read_report, write_json,
    write_numeric_rows, write_pairs, write_report, write_scans, InputSummary, PipelineConfig,
    RunReport,
};
use crate::scale::{
    recover_scale, smooth_angular_rate_from_poses, AngularRateSeries, HeadingSeries, ScaleResult,
    SmootherConfig,
};
use crate::simulator::{
    derive_seed, generate_landmarks, generate_trajectory, simulate_pairs, simulate_scans,
    GroundTruth, LandmarkField, NoiseSpec, SensorModel, TrajectoryKind, TrajectoryProfile,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_OTHER: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_IO: i32 = 3;
pub const EXIT_UNIDENTIFIABLE: i32 = 4;
pub const EXIT_NO_CONSENSUS: i32 = 5;
pub const EXIT_UNCONVERGED: i32 = 6;

pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::InvalidArgument(_) => EXIT_USAGE,
        Error::Io { .. } | Error::Parse { .. } | Error::Serialization(_) => EXIT_IO,
        Error::Unidentifiable { .. } | Error::InsufficientExcitation(_) => EXIT_UNIDENTIFIABLE,
        Error::NoConsensus { .. } => EXIT_NO_CONSENSUS,
        _ => EXIT_OTHER,
    }
}

#[derive(Debug, Parser)]
#[command(name = "radar-calib", version, about = "Extrinsic calibration of 2D Doppler radar pairs")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate simulated trials (scans, pairs, ground truth).
    Simulate(SimulateArgs),
    /// Estimate the yaw and translation axis from pairs or scans.
    Calibrate(CalibrateArgs),
    /// Check whether the motion in a pair file excites the calibration.
    ExcitationCheck(ExcitationArgs),
    /// Mean velocity error of a calibration, or a full Monte-Carlo experiment.
    Evaluate(EvaluateArgs),
    /// Recover the metric translation length from a yaw-rate reference.
    RecoverScale(ScaleArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ProfileKind {
    Periodic,
    ConstantOmega,
    StraightLine,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long)]
    pub out: PathBuf,
    /// Pipeline configuration (TOML); its `[experiment]` table supplies defaults.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub trials: Option<usize>,
    /// Ego-velocity noise levels, m/s, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub sigma: Option<Vec<f64>>,
    /// Durations, seconds, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub duration: Option<Vec<f64>>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Sample rate, Hz.
    #[arg(long)]
    pub rate: Option<f64>,
    #[arg(long, value_enum)]
    pub profile: Option<ProfileKind>,
    #[arg(long, allow_negative_numbers = true)]
    pub theta_t: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    pub theta_ba: Option<f64>,
    /// ‖t‖, meters.
    #[arg(long)]
    pub translation_norm: Option<f64>,
    /// Fraction of detections replaced by outliers in the scan files.
    #[arg(long, default_value_t = 0.0)]
    pub outlier_fraction: f64,
    /// Range-rate noise of detections, m/s.
    #[arg(long, default_value_t = 0.01)]
    pub detection_sigma: f64,
    /// Skip the detection-level scan files.
    #[arg(long)]
    pub no_scans: bool,
}

#[derive(Debug, Args)]
pub struct CalibrateArgs {
    #[arg(long)]
    pub out: PathBuf,
    /// Pair file to calibrate from.
    #[arg(long, conflicts_with = "scans", required_unless_present = "scans")]
    pub pairs: Option<PathBuf>,
    /// Scan file; ego-velocities are estimated and synchronized first.
    #[arg(long)]
    pub scans: Option<PathBuf>,
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// RANSAC seed, overriding the configuration.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Solve even when the motion fails the excitation check.
    #[arg(long)]
    pub no_excitation_check: bool,
}

#[derive(Debug, Args)]
pub struct ExcitationArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub pairs: PathBuf,
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Translation-axis guess; initialized from the data when absent.
    #[arg(long, allow_negative_numbers = true, requires = "theta_ba")]
    pub theta_t: Option<f64>,
    #[arg(long, allow_negative_numbers = true, requires = "theta_t")]
    pub theta_ba: Option<f64>,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Pair file to evaluate.
    #[arg(long, required_unless_present = "experiment")]
    pub pairs: Option<PathBuf>,
    /// Calibration report supplying extrinsics and fused motion.
    #[arg(long)]
    pub report: Option<PathBuf>,
    /// Ground truth file written by `simulate`.
    #[arg(long)]
    pub truth: Option<PathBuf>,
    #[arg(long, allow_negative_numbers = true, requires = "theta_ba")]
    pub theta_t: Option<f64>,
    #[arg(long, allow_negative_numbers = true, requires = "theta_t")]
    pub theta_ba: Option<f64>,
    /// Run the simulated experiment matrix instead.
    #[arg(long, conflicts_with_all = ["pairs", "report", "truth"])]
    pub experiment: bool,
    #[arg(long)]
    pub trials: Option<usize>,
    #[arg(long, value_delimiter = ',')]
    pub sigma: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',')]
    pub duration: Option<Vec<f64>>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker threads; all cores by default.
    #[arg(long)]
    pub jobs: Option<usize>,
}

#[derive(Debug, Args)]
pub struct ScaleArgs {
    #[arg(long)]
    pub out: PathBuf,
    /// Calibration report from `calibrate`.
    #[arg(long)]
    pub report: PathBuf,
    /// `timestamp,omega` CSV.
    #[arg(long, conflicts_with = "poses", required_unless_present = "poses")]
    pub rates: Option<PathBuf>,
    /// `timestamp,heading` CSV, smoothed and differentiated.
    #[arg(long)]
    pub poses: Option<PathBuf>,
    /// Samples with a slower reference rate (rad/s) are ignored.
    #[arg(long, default_value_t = 0.1)]
    pub min_rate: f64,
    #[arg(long, default_value_t = SmootherConfig::default().heading_sigma)]
    pub heading_sigma: f64,
    #[arg(long, default_value_t = SmootherConfig::default().jerk_psd)]
    pub jerk_psd: f64,
}

/// Parses `args` (including the program name) and runs the command.
/// Returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    match execute(&cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

pub fn execute(command: &Command) -> Result<i32, Error> {
    match command {
        Command::Simulate(a) => cmd_simulate(a),
        Command::Calibrate(a) => cmd_calibrate(a),
        Command::ExcitationCheck(a) => cmd_excitation(a),
        Command::Evaluate(a) => cmd_evaluate(a),
        Command::RecoverScale(a) => cmd_recover_scale(a),
    }
}

fn load_config(path: &Option<PathBuf>) -> Result<PipelineConfig, Error> {
    match path {
        Some(p) => PipelineConfig::load(p),
        None => Ok(PipelineConfig::default()),
    }
}

fn create_out(out: &Path) -> Result<(), Error> {
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))
}

fn cell_dir(out: &Path, sigma: f64, duration: f64) -> PathBuf {
    out.join(format!("sigma_{sigma}")).join(format!("duration_{duration}"))
}

#[derive(Serialize)]
struct SimulationRun<'a> {
    command: &'static str,
    seed: u64,
    config: &'a PipelineConfig,
    noise: NoiseSpec,
    sensor: SensorModel,
    landmarks: LandmarkField,
    scans: bool,
}

#[derive(Serialize)]
struct TrialInfo {
    sigma: f64,
    duration: f64,
    trial: usize,
    seed: u64,
}

fn write_truth_series(dir: &Path, truth: &GroundTruth) -> Result<(), Error> {
    let rates: Vec<Vec<f64>> = truth
        .times
        .iter()
        .zip(&truth.omega)
        .map(|(t, w)| vec![*t, *w])
        .collect();
    write_numeric_rows(dir.join("rates.csv"), "timestamp,omega", &rates)?;
    let poses: Vec<Vec<f64>> = truth
        .times
        .iter()
        .zip(&truth.heading)
        .map(|(t, h)| vec![*t, *h])
        .collect();
    write_numeric_rows(dir.join("poses.csv"), "timestamp,heading", &poses)
}

fn cmd_simulate(a: &SimulateArgs) -> Result<i32, Error> {
    let mut config = load_config(&a.config)?;
    let exp = &mut config.experiment;
    if let Some(v) = a.trials {
        exp.trials = v;
    }
    if let Some(v) = &a.sigma {
        exp.sigmas = v.clone();
    }
    if let Some(v) = &a.duration {
        exp.durations = v.clone();
    }
    if let Some(v) = a.seed {
        exp.seed = v;
    }
    let traj = &mut exp.trajectory;
    if let Some(v) = a.rate {
        traj.rate = v;
    }
    if let Some(v) = a.theta_t {
        traj.rig.theta_t = v;
    }
    if let Some(v) = a.theta_ba {
        traj.rig.theta_ba = v;
    }
    if let Some(v) = a.translation_norm {
        traj.rig.translation_norm = v;
    }
    match a.profile {
        Some(ProfileKind::Periodic) => traj.kind = TrajectoryKind::default(),
        Some(ProfileKind::ConstantOmega) => {
            traj.kind = TrajectoryKind::ConstantOmega { velocity: [1.0, 0.3], omega: 0.5 }
        }
        Some(ProfileKind::StraightLine) => {
            traj.kind = TrajectoryKind::StraightLine { velocity: [1.0, 0.3] }
        }
        None => {}
    }
    // One trial of the default cell unless a configuration file says otherwise.
    if a.config.is_none() && a.trials.is_none() {
        exp.trials = 1;
    }
    if a.config.is_none() && a.sigma.is_none() {
        exp.sigmas = vec![NoiseSpec::default().sigma_r];
    }
    if a.config.is_none() && a.duration.is_none() {
        exp.durations = vec![TrajectoryProfile::default().duration];
    }
    config.validate()?;
    let base_noise = NoiseSpec {
        outlier_fraction: a.outlier_fraction,
        detection_range_rate_sigma: a.detection_sigma,
        ..NoiseSpec::default()
    };
    base_noise.validate()?;
    let exp = &config.experiment;

    create_out(&a.out)?;
    write_json(
        a.out.join("run.json"),
        &SimulationRun {
            command: "simulate",
            seed: exp.seed,
            config: &config,
            noise: base_noise.clone(),
            sensor: SensorModel::default(),
            landmarks: LandmarkField::default(),
            scans: !a.no_scans,
        },
    )?;
    for &sigma in &exp.sigmas {
        for &duration in &exp.durations {
            let truth = generate_trajectory(&TrajectoryProfile { duration, ..exp.trajectory.clone() })?;
            for trial in 0..exp.trials {
                let seed = exp.trial_seed(sigma, duration, trial);
                let dir = cell_dir(&a.out, sigma, duration).join(format!("trial_{trial:03}"));
                create_out(&dir)?;
                let noise = NoiseSpec { sigma_r: sigma, rng_seed: seed, ..base_noise.clone() };
                write_pairs(dir.join("pairs.txt"), &simulate_pairs(&truth, &noise)?)?;
                if !a.no_scans {
                    let lm = generate_landmarks(&truth, &LandmarkField::default(), derive_seed(seed, 0))?;
                    let sim = simulate_scans(&truth, &lm, &SensorModel::default(), &noise)?;
                    let mut scans: Vec<_> = sim.a.scans.iter().chain(&sim.b.scans).collect();
                    scans.sort_by(|x, y| x.timestamp.total_cmp(&y.timestamp));
                    write_scans(dir.join("scans.txt"), scans)?;
                }
                write_json(dir.join("truth.json"), &truth)?;
                write_truth_series(&dir, &truth)?;
                write_json(dir.join("trial.json"), &TrialInfo { sigma, duration, trial, seed })?;
            }
        }
    }
    Ok(EXIT_OK)
}

#[derive(Serialize)]
struct FailureRecord<'a> {
    command: &'static str,
    error: String,
    exit_code: i32,
    seed: u64,
    config: &'a PipelineConfig,
    excitation: Option<&'a ExcitationReport>,
}

fn cmd_calibrate(a: &CalibrateArgs) -> Result<i32, Error> {
    let mut config = load_config(&a.config)?;
    if let Some(s) = a.seed {
        config.ransac.rng_seed = s;
    }
    if a.no_excitation_check {
        config.solver.enforce_excitation = false;
    }
    config.validate()?;
    let (pairs, input) = match (&a.pairs, &a.scans) {
        (Some(p), _) => {
            let raw = load_pairs(p)?;
            let kept = filter_pairs(&raw, config.min_speed);
            let input = InputSummary {
                source: p.display().to_string(),
                n_pairs: raw.len(),
                n_pairs_filtered: kept.len(),
                n_scans_failed: 0,
            };
            (kept, input)
        }
        (None, Some(s)) => {
            let prepared = prepare_pairs(&load_scans(s)?, &config)?;
            let input = prepared.summary(s.display().to_string());
            (prepared.pairs, input)
        }
        (None, None) => unreachable!("clap requires one input"),
    };
    create_out(&a.out)?;
    let seed = config.ransac.rng_seed;
    let calib = match solve_lm(&pairs, &config.solver) {
        Ok(c) => c,
        Err(e) => {
            let excitation = match &e {
                Error::Unidentifiable { excitation, .. } => excitation.as_deref(),
                _ => None,
            };
            write_json(
                a.out.join("failure.json"),
                &FailureRecord {
                    command: "calibrate",
                    error: e.to_string(),
                    exit_code: exit_code(&e),
                    seed,
                    config: &config,
                    excitation,
                },
            )?;
            return Err(e);
        }
    };
    let converged = calib.converged;
    let report = RunReport::new(calib, &pairs, config, seed, input)?;
    write_report(&report, a.out.join("report.json"))?;
    write_error_table(&a.out.join("errors.csv"), &report)?;
    Ok(if converged { EXIT_OK } else { EXIT_UNCONVERGED })
}

fn write_error_table(path: &Path, report: &RunReport) -> Result<(), Error> {
    let t = &report.error_table;
    let rows: Vec<Vec<f64>> = (0..t.timestamps.len())
        .map(|i| vec![t.timestamps[i], t.raw_a[i], t.fused_a[i], t.raw_b[i], t.fused_b[i]])
        .collect();
    write_numeric_rows(path, "timestamp,raw_a,fused_a,raw_b,fused_b", &rows)
}

#[derive(Serialize)]
struct ExcitationOutput<'a> {
    command: &'static str,
    config: &'a PipelineConfig,
    /// Extrinsics the motion states were initialized from.
    guess: Extrinsics,
    guess_source: &'static str,
    n_pairs: usize,
    exceeds_max_degenerate_fraction: bool,
    report: ExcitationReport,
}

fn initial_guess(pairs: &[MeasurementPair], config: &PipelineConfig) -> Result<(Extrinsics, &'static str), Error> {
    let opts = &config.solver;
    let k = opts.k_pairs.unwrap_or_else(|| default_k(pairs.len()));
    match init_extrinsics(pairs, k, opts.axis_min_norm, opts.covariance_floor) {
        Ok(e) => Ok((e, "initialized")),
        Err(Error::InsufficientExcitation(_)) => Ok((Extrinsics::new(0.0, init_rotation(pairs, k)?), "yaw_only")),
        Err(e) => Err(e),
    }
}

fn cmd_excitation(a: &ExcitationArgs) -> Result<i32, Error> {
    let config = load_config(&a.config)?;
    let pairs = filter_pairs(&load_pairs(&a.pairs)?, config.min_speed);
    let (guess, guess_source) = match (a.theta_t, a.theta_ba) {
        (Some(t), Some(b)) => (Extrinsics::new(t, b), "arguments"),
        _ => initial_guess(&pairs, &config)?,
    };
    let report = excitation_report(&pairs, &guess, &config.solver.excitation)?;
    let exceeds = report.fraction_degenerate > config.solver.excitation.max_degenerate_fraction;
    create_out(&a.out)?;
    write_json(
        a.out.join("excitation.json"),
        &ExcitationOutput {
            command: "excitation-check",
            config: &config,
            guess,
            guess_source,
            n_pairs: pairs.len(),
            exceeds_max_degenerate_fraction: exceeds,
            report,
        },
    )?;
    Ok(if exceeds { EXIT_UNIDENTIFIABLE } else { EXIT_OK })
}

#[derive(Serialize)]
struct Evaluation<'a> {
    command: &'static str,
    config: &'a PipelineConfig,
    extrinsics: Extrinsics,
    extrinsics_source: &'static str,
    n_pairs: usize,
    /// Mean velocity error magnitude, m/s.
    velocity_error_metric: f64,
    /// Medians of the velocity errors against ground truth, when a report
    /// and truth file are both given.
    fused_vs_truth: Option<[f64; 4]>,
}

#[derive(Serialize)]
struct ExperimentOutput<'a> {
    command: &'static str,
    seed: u64,
    config: &'a PipelineConfig,
    results: &'a ExperimentResults,
}

fn cmd_evaluate(a: &EvaluateArgs) -> Result<i32, Error> {
    let mut config = load_config(&a.config)?;
    if a.experiment {
        let exp = &mut config.experiment;
        if let Some(v) = a.trials {
            exp.trials = v;
        }
        if let Some(v) = &a.sigma {
            exp.sigmas = v.clone();
        }
        if let Some(v) = &a.duration {
            exp.durations = v.clone();
        }
        if let Some(v) = a.seed {
            exp.seed = v;
        }
        config.validate()?;
        let results = run_matrix(&config.experiment, &config.solver, config.min_speed, a.jobs)?;
        create_out(&a.out)?;
        write_json(
            a.out.join("experiment.json"),
            &ExperimentOutput {
                command: "evaluate",
                seed: config.experiment.seed,
                config: &config,
                results: &results,
            },
        )?;
        write_experiment_tables(&a.out, &results)?;
        return Ok(EXIT_OK);
    }

    let pairs_path = a.pairs.as_ref().expect("clap requires --pairs");
    let pairs = filter_pairs(&load_pairs(pairs_path)?, config.min_speed);
    let report = a.report.as_ref().map(read_report).transpose()?;
    let truth: Option<GroundTruth> = a.truth.as_ref().map(read_json).transpose()?;
    let (extrinsics, source) = match (a.theta_t, a.theta_ba, &report, &truth) {
        (Some(t), Some(b), _, _) => (Extrinsics::new(t, b), "arguments"),
        (_, _, Some(r), _) => (r.calibration.extrinsics, "report"),
        (_, _, None, Some(t)) => (t.extrinsics, "truth"),
        _ => {
            return Err(Error::InvalidArgument(
                "evaluate needs --theta-t/--theta-ba, --report or --truth".into(),
            ))
        }
    };
    let metric = velocity_error_metric(&pairs, &extrinsics)?;
    let fused_vs_truth = match (&report, &truth) {
        (Some(r), Some(t)) => {
            let reference = truth_for_pairs(t, &pairs)?;
            let s = fused_ego_velocities(&r.calibration, &pairs, VelocityReference::Truth(&reference))?;
            let med = |v: &[f64]| crate::geometry::median(v).unwrap_or(f64::NAN);
            Some([med(&s.raw_a), med(&s.fused_a), med(&s.raw_b), med(&s.fused_b)])
        }
        _ => None,
    };
    create_out(&a.out)?;
    write_json(
        a.out.join("evaluation.json"),
        &Evaluation {
            command: "evaluate",
            config: &config,
            extrinsics,
            extrinsics_source: source,
            n_pairs: pairs.len(),
            velocity_error_metric: metric,
            fused_vs_truth,
        },
    )?;
    Ok(EXIT_OK)
}

/// Ground-truth velocities at the pair timestamps, which must coincide with
/// truth samples.
fn truth_for_pairs(
    truth: &GroundTruth,
    pairs: &[MeasurementPair],
) -> Result<Vec<crate::calib::TruthVelocity>, Error> {
    let all = truth.truth_velocities();
    pairs
        .iter()
        .map(|p| {
            truth
                .times
                .binary_search_by(|t| t.total_cmp(&p.timestamp))
                .map(|i| all[i])
                .map_err(|_| {
                    Error::InvalidArgument(format!("no ground truth sample at t = {}", p.timestamp))
                })
        })
        .collect()
}

fn write_experiment_tables(out: &Path, results: &ExperimentResults) -> Result<(), Error> {
    let cells: Vec<Vec<f64>> = results
        .cells
        .iter()
        .map(|c| {
            vec![
                c.sigma,
                c.duration,
                c.n_trials as f64,
                c.n_failed as f64,
                c.median_theta_t_error_deg,
                c.median_theta_ba_error_deg,
                c.median_raw_error_a,
                c.median_fused_error_a,
                c.median_raw_error_b,
                c.median_fused_error_b,
            ]
        })
        .collect();
    write_numeric_rows(
        out.join("cells.csv"),
        "sigma,duration,trials,failed,theta_t_err_deg,theta_ba_err_deg,raw_a,fused_a,raw_b,fused_b",
        &cells,
    )?;
    let trials: Vec<Vec<f64>> = results
        .trials
        .iter()
        .filter_map(|t| match &t.result {
            crate::experiment::TrialResult::Solved(m) => Some(vec![
                t.sigma,
                t.duration,
                t.trial as f64,
                m.theta_t_error_deg,
                m.theta_ba_error_deg,
                m.raw_error_a,
                m.fused_error_a,
                m.raw_error_b,
                m.fused_error_b,
            ]),
            crate::experiment::TrialResult::Failed { .. } => None,
        })
        .collect();
    write_numeric_rows(
        out.join("trials.csv"),
        "sigma,duration,trial,theta_t_err_deg,theta_ba_err_deg,raw_a,fused_a,raw_b,fused_b",
        &trials,
    )
}

#[derive(Serialize)]
struct ScaleOutput<'a> {
    command: &'static str,
    report: String,
    reference: String,
    min_rate: f64,
    smoother: Option<SmootherConfig>,
    result: &'a ScaleResult,
}

fn cmd_recover_scale(a: &ScaleArgs) -> Result<i32, Error> {
    let report = read_report(&a.report)?;
    let (reference, smoother, source) = match (&a.rates, &a.poses) {
        (Some(r), _) => (AngularRateSeries::read_csv(r)?, None, r),
        (None, Some(p)) => {
            let cfg = SmootherConfig { heading_sigma: a.heading_sigma, jerk_psd: a.jerk_psd };
            let rates = smooth_angular_rate_from_poses(&HeadingSeries::read_csv(p)?, &cfg)?;
            (rates, Some(cfg), p)
        }
        (None, None) => unreachable!("clap requires one reference"),
    };
    let result = recover_scale(&report.calibration, &reference, a.min_rate)?;
    create_out(&a.out)?;
    write_json(
        a.out.join("scale.json"),
        &ScaleOutput {
            command: "recover-scale",
            report: a.report.display().to_string(),
            reference: source.display().to_string(),
            min_rate: a.min_rate,
            smoother,
            result: &result,
        },
    )?;
    Ok(EXIT_OK)
}
