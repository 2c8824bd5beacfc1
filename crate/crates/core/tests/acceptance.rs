//! Acceptance criteria, one line of output each.
//!
//! Runs without the libtest harness and exits nonzero if any criterion
//! fails.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::time::Instant;

use nalgebra::DMatrix;
use radar_calib::calib::{
    cost, init_motion_states, jacobian, residuals, solve_lm, unconstrained_objective, CalibState,
    Extrinsics, MeasurementPair, MotionState, SolverOptions, DEFAULT_COVARIANCE_FLOOR,
};
use radar_calib::cli;
use radar_calib::ego_velocity::{ransac_fit, RansacConfig};
use radar_calib::experiment::{run_matrix, ExperimentConfig};
use radar_calib::geometry::Vec2;
use radar_calib::identifiability::{excitation_report, ExcitationThresholds};
use radar_calib::pipeline::{
    format_pairs, format_scans, parse_pairs, parse_scans, read_report, write_report,
    PipelineConfig,
};
use radar_calib::scale::{recover_scale, AngularRateSeries};
use radar_calib::simulator::{
    generate_landmarks, generate_trajectory, simulate_pairs, simulate_scans, GroundTruth,
    LandmarkField, NoiseSpec, Rig, SensorModel, TrajectoryKind, TrajectoryProfile,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;

type Outcome = (bool, String);

fn noisy_pairs(truth: &GroundTruth, sigma: f64, seed: u64) -> Vec<MeasurementPair> {
    simulate_pairs(truth, &NoiseSpec { sigma_r: sigma, rng_seed: seed, ..NoiseSpec::default() }).unwrap()
}

fn noise_sweep() -> (Outcome, Outcome) {
    let config = ExperimentConfig { durations: vec![15.0, 120.0], ..ExperimentConfig::default() };
    let results = run_matrix(&config, &SolverOptions::default(), 0.05, None).unwrap();

    let mut ok1 = true;
    let mut worst = (0.0f64, 0.0f64);
    let mut best_cell = (f64::NAN, f64::NAN);
    for c in &results.cells {
        let (et, eb) = (c.median_theta_t_error_deg, c.median_theta_ba_error_deg);
        ok1 &= c.n_failed == 0 && et <= 2.0 && eb <= 3.0;
        worst = (worst.0.max(et), worst.1.max(eb));
        if c.sigma == 0.05 && c.duration == 120.0 {
            ok1 &= et <= 1.0 && eb <= 1.5;
            best_cell = (et, eb);
        }
    }
    let c1 = (
        ok1,
        format!(
            "worst cell median {:.3} deg / {:.3} deg (<= 2 / 3); (0.05, 120 s) cell {:.3} / {:.3} (<= 1 / 1.5)",
            worst.0, worst.1, best_cell.0, best_cell.1
        ),
    );

    let cell = results
        .cells
        .iter()
        .find(|c| c.sigma == 0.2 && c.duration == 120.0)
        .expect("cell present");
    let gain_a = cell.median_raw_error_a - cell.median_fused_error_a;
    let gain_b = cell.median_raw_error_b - cell.median_fused_error_b;
    let c2 = (
        gain_a >= 0.03 && gain_b >= 0.03,
        format!("fused gain a {:.1} mm/s, b {:.1} mm/s (>= 30)", 1e3 * gain_a, 1e3 * gain_b),
    );
    (c1, c2)
}

fn exact_recovery() -> Outcome {
    let truth = generate_trajectory(&TrajectoryProfile::periodic(30.0)).unwrap();
    let pairs = noisy_pairs(&truth, 0.0, 1);
    let report = solve_lm(&pairs, &SolverOptions::default()).unwrap();
    let de = (
        (report.extrinsics.theta_t - truth.extrinsics.theta_t).abs(),
        (report.extrinsics.theta_ba - truth.extrinsics.theta_ba).abs(),
    );
    let states = truth.motion_states();
    let dm = report
        .used_indices
        .iter()
        .zip(&report.fused_motion)
        .map(|(&i, m)| (m.v_a - states[i].v_a).amax().max((m.omega_gamma - states[i].omega_gamma).abs()))
        .fold(0.0, f64::max);
    (
        de.0 < 1e-6 && de.1 < 1e-6 && dm < 1e-8 && report.used_indices.len() == pairs.len(),
        format!("extrinsic errors {:.1e}, {:.1e} rad (< 1e-6); motion {:.1e} (< 1e-8)", de.0, de.1, dm),
    )
}

fn scale_ambiguity() -> Outcome {
    let truth = generate_trajectory(&TrajectoryProfile::periodic(5.0)).unwrap();
    let pairs = noisy_pairs(&truth, 0.1, 4);
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let (mut worst, mut ok) = (0.0f64, true);
    for _ in 0..100 {
        let velocities: Vec<Vec2> = pairs
            .iter()
            .map(|_| Vec2::new(rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0)))
            .collect();
        let omegas: Vec<f64> = pairs.iter().map(|_| rng.random_range(-1.5..1.5)).collect();
        let t = Vec2::new(rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0));
        let theta_ba = rng.random_range(-3.0..3.0);
        let base = unconstrained_objective(&pairs, &velocities, &omegas, &t, theta_ba).unwrap();
        for gamma in [0.1, 3.0, 10.0] {
            let scaled: Vec<f64> = omegas.iter().map(|w| gamma * w).collect();
            let c = unconstrained_objective(&pairs, &velocities, &scaled, &(t / gamma), theta_ba).unwrap();
            worst = worst.max(((c - base) / base).abs());
            ok &= approx::relative_eq!(c, base, epsilon = 0.0, max_relative = 1e-12);
        }
    }
    (ok, format!("max relative cost change {worst:.1e} (< 1e-12)"))
}

fn degeneracy() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let mut fractions = Vec::new();
    let mut codes = Vec::new();
    let kinds = [
        ("constant_omega", TrajectoryKind::ConstantOmega { velocity: [1.0, 0.3], omega: 0.5 }),
        ("straight_line", TrajectoryKind::StraightLine { velocity: [1.0, 0.3] }),
        ("periodic_default", TrajectoryKind::default()),
    ];
    for (name, kind) in kinds {
        let truth = generate_trajectory(&TrajectoryProfile::periodic(30.0).with_kind(kind)).unwrap();
        let clean = noisy_pairs(&truth, 0.0, 0);
        let r = excitation_report(&clean, &truth.extrinsics, &ExcitationThresholds::default()).unwrap();
        fractions.push(r.fraction_degenerate);

        let pair_file = dir.path().join(format!("{name}.txt"));
        radar_calib::pipeline::write_pairs(&pair_file, &noisy_pairs(&truth, 0.1, 2)).unwrap();
        codes.push(cli::run([
            "radar-calib",
            "calibrate",
            "--pairs",
            pair_file.to_str().unwrap(),
            "--out",
            dir.path().join(name).to_str().unwrap(),
        ]));
    }
    let ok = fractions[0] == 1.0
        && fractions[1] == 1.0
        && fractions[2] <= ExcitationThresholds::default().max_degenerate_fraction
        && codes == [cli::EXIT_UNIDENTIFIABLE, cli::EXIT_UNIDENTIFIABLE, cli::EXIT_OK];
    (
        ok,
        format!(
            "fraction degenerate {:.3} / {:.3} / {:.3}, calibrate exit codes {:?} (constant omega / straight / periodic)",
            fractions[0], fractions[1], fractions[2], codes
        ),
    )
}

/// Per dataset: max over columns of the column-wise max abs difference,
/// divided by the column's max abs analytic entry.
fn jacobian_check() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut worst = 0.0f64;
    for k in 0..50 {
        let rig = Rig {
            theta_t: rng.random_range(0.0..std::f64::consts::PI),
            theta_ba: rng.random_range(-3.1..3.1),
            translation_norm: rng.random_range(0.3..3.0),
        };
        let truth = generate_trajectory(&TrajectoryProfile::periodic(2.0).with_rig(rig)).unwrap();
        let pairs = noisy_pairs(&truth, rng.random_range(0.02..0.3), k);
        let state = CalibState {
            motion: pairs
                .iter()
                .map(|_| {
                    MotionState::new(
                        Vec2::new(rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0)),
                        rng.random_range(-2.0..2.0),
                    )
                })
                .collect(),
            extrinsics: Extrinsics::new(rng.random_range(0.05..3.09), rng.random_range(-3.0..3.0)),
        };
        let analytic = jacobian(&state, &pairs).unwrap().to_dense();
        let numeric = finite_difference_jacobian(&state, &pairs);
        for c in 0..analytic.ncols() {
            let scale = analytic.column(c).amax();
            if scale == 0.0 {
                continue;
            }
            let diff = (analytic.column(c) - numeric.column(c)).amax();
            worst = worst.max(diff / scale);
        }
    }
    (worst < 1e-5, format!("max relative error {worst:.2e} over 50 datasets (< 1e-5)"))
}

fn perturbed(state: &CalibState, col: usize, h: f64) -> CalibState {
    let mut s = state.clone();
    let m = s.motion.len();
    if col < 3 * m {
        let st = &mut s.motion[col / 3];
        match col % 3 {
            0 => st.v_a.x += h,
            1 => st.v_a.y += h,
            _ => st.omega_gamma += h,
        }
    } else if col == 3 * m {
        s.extrinsics.theta_t += h;
    } else {
        s.extrinsics.theta_ba += h;
    }
    s
}

fn finite_difference_jacobian(state: &CalibState, pairs: &[MeasurementPair]) -> DMatrix<f64> {
    let m = state.motion.len();
    let h = 1e-6;
    let mut out = DMatrix::zeros(4 * m, 3 * m + 2);
    for c in 0..3 * m + 2 {
        let plus = residuals(&perturbed(state, c, h), pairs).unwrap();
        let minus = residuals(&perturbed(state, c, -h), pairs).unwrap();
        out.set_column(c, &((plus - minus) / (2.0 * h)));
    }
    out
}

fn ransac_robustness() -> Outcome {
    let truth = generate_trajectory(&TrajectoryProfile::periodic(5.0)).unwrap();
    let landmarks = generate_landmarks(&truth, &LandmarkField::default(), 8).unwrap();
    let noise = NoiseSpec {
        outlier_fraction: 0.3,
        detection_range_rate_sigma: 0.01,
        rng_seed: 8,
        ..NoiseSpec::default()
    };
    let sim = simulate_scans(&truth, &landmarks, &SensorModel::default(), &noise).unwrap();
    let cfg = RansacConfig::default();
    let (mut err_sum, mut outliers, mut rejected) = (0.0, 0usize, 0usize);
    for (i, (scan, labels)) in sim.a.scans.iter().zip(&sim.a.outliers).take(100).enumerate() {
        let fit = ransac_fit(scan, &cfg).unwrap();
        err_sum += (fit.estimate.velocity - truth.v_a[i]).norm();
        outliers += labels.iter().filter(|o| **o).count();
        rejected += labels.iter().zip(&fit.inliers).filter(|(o, inl)| **o && !**inl).count();
    }
    let mean_err = err_sum / 100.0;
    let rate = rejected as f64 / outliers as f64;
    (
        mean_err < 0.05 && rate >= 0.95,
        format!("mean error {:.4} m/s (< 0.05), rejected {:.1}% of {outliers} outliers (>= 95%)", mean_err, 100.0 * rate),
    )
}

fn grid_oracle() -> Outcome {
    let truth = generate_trajectory(&TrajectoryProfile::periodic(10.0)).unwrap();
    let all = noisy_pairs(&truth, 0.05, 12);
    let pairs: Vec<MeasurementPair> = all.iter().step_by(20).take(10).copied().collect();
    let options = SolverOptions { enforce_excitation: false, ..SolverOptions::default() };
    let report = solve_lm(&pairs, &options).unwrap();
    let lm_state = CalibState {
        motion: report.fused_motion.clone(),
        extrinsics: report.extrinsics,
    };
    let lm_cost = cost(&lm_state, &pairs).unwrap();

    let profile_cost = |ext: Extrinsics| -> f64 {
        let motion: Option<Vec<MotionState>> = init_motion_states(&pairs, &ext, DEFAULT_COVARIANCE_FLOOR)
            .unwrap()
            .into_iter()
            .collect();
        motion.map_or(f64::INFINITY, |motion| cost(&CalibState { motion, extrinsics: ext }, &pairs).unwrap())
    };
    let step = 0.1f64.to_radians();
    let (grid_cost, grid_t, grid_ba) = (0..1800)
        .into_par_iter()
        .map(|i| {
            let theta_t = i as f64 * step;
            (-1799..=1800)
                .map(|j| {
                    let theta_ba = j as f64 * step;
                    (profile_cost(Extrinsics::new(theta_t, theta_ba)), theta_t, theta_ba)
                })
                .fold((f64::INFINITY, 0.0, 0.0), |a, b| if b.0 < a.0 { b } else { a })
        })
        .reduce(|| (f64::INFINITY, 0.0, 0.0), |a, b| if b.0 < a.0 { b } else { a });
    let rel = (lm_cost - grid_cost) / grid_cost;
    (
        rel <= 1e-6,
        format!(
            "LM cost {lm_cost:.6} vs grid best {grid_cost:.6} at ({:.1}, {:.1}) deg, relative {rel:+.2e} (<= 1e-6)",
            grid_t.to_degrees(),
            grid_ba.to_degrees()
        ),
    )
}

fn scale_recovery() -> Outcome {
    let gyro = Normal::new(0.0, 0.02).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut ok = true;
    let mut parts = Vec::new();
    for norm in [0.8, 2.0, 5.68] {
        let rig = Rig { translation_norm: norm, ..Rig::default() };
        let truth = generate_trajectory(&TrajectoryProfile::periodic(60.0).with_rig(rig)).unwrap();
        let report = solve_lm(&noisy_pairs(&truth, 0.1, 9), &SolverOptions::default()).unwrap();
        let noisy: Vec<f64> = truth.omega.iter().map(|w| w + gyro.sample(&mut rng)).collect();
        let reference = AngularRateSeries::new(truth.times.clone(), noisy, "gyro").unwrap();
        let s = recover_scale(&report, &reference, 0.1).unwrap();
        let rel = (s.translation_magnitude - norm).abs() / norm;
        ok &= rel <= 0.1;
        parts.push(format!("{norm} -> {:.3} m ({:.1}%)", s.translation_magnitude, 100.0 * rel));
    }
    (ok, format!("{} (within 10%)", parts.join(", ")))
}

fn files_identical(a: &Path, b: &Path) -> bool {
    let mut names: Vec<_> = std::fs::read_dir(a).unwrap().map(|e| e.unwrap().file_name()).collect();
    names.sort();
    names.iter().all(|n| {
        let (pa, pb) = (a.join(n), b.join(n));
        if pa.is_dir() {
            files_identical(&pa, &pb)
        } else {
            std::fs::read(&pa).unwrap() == std::fs::read(&pb).unwrap()
        }
    }) && std::fs::read_dir(b).unwrap().count() == names.len()
}

fn round_trip_and_determinism() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let mut checks = Vec::new();

    let truth = generate_trajectory(&TrajectoryProfile::periodic(10.0)).unwrap();
    let pairs = noisy_pairs(&truth, 0.1, 5);
    let text = format_pairs(&pairs);
    let back = parse_pairs(&text, Path::new("pairs")).unwrap();
    checks.push(("pairs", back == pairs && format_pairs(&back) == text));

    let lm = generate_landmarks(&truth, &LandmarkField::default(), 5).unwrap();
    let noise = NoiseSpec { outlier_fraction: 0.1, rng_seed: 5, ..NoiseSpec::default() };
    let sim = simulate_scans(&truth, &lm, &SensorModel::default(), &noise).unwrap();
    let text = format_scans(sim.a.scans.iter().chain(&sim.b.scans));
    let parsed = parse_scans(&text, Path::new("scans")).unwrap();
    let bitwise = parsed["a"] == sim.a.scans && parsed["b"] == sim.b.scans;
    checks.push(("scans", bitwise && format_scans(parsed.values().flatten()) == text));

    let mut config = PipelineConfig::default();
    config.min_speed = 0.1 + 0.2;
    config.experiment.trajectory.rig.theta_t = std::f64::consts::FRAC_1_SQRT_2;
    let toml = config.to_toml_string().unwrap();
    let config_back = PipelineConfig::from_toml_str(&toml).unwrap();
    checks.push(("config", config_back == config && config_back.to_toml_string().unwrap() == toml));

    let sim_args = |out: &Path| {
        vec![
            "radar-calib".to_string(),
            "simulate".into(),
            "--seed".into(),
            "21".into(),
            "--duration".into(),
            "15".into(),
            "--outlier-fraction".into(),
            "0.2".into(),
            "--out".into(),
            out.display().to_string(),
        ]
    };
    let c1 = cli::run(sim_args(&d.join("sim1")));
    let c2 = cli::run(sim_args(&d.join("sim2")));
    checks.push(("simulate", c1 == 0 && c2 == 0 && files_identical(&d.join("sim1"), &d.join("sim2"))));

    let scans = d.join("sim1/sigma_0.1/duration_15/trial_000/scans.txt");
    let cal = |out: &str| {
        cli::run([
            "radar-calib",
            "calibrate",
            "--scans",
            scans.to_str().unwrap(),
            "--seed",
            "17",
            "--out",
            d.join(out).to_str().unwrap(),
        ])
    };
    let (r1, r2) = (cal("cal1"), cal("cal2"));
    let report_path = d.join("cal1/report.json");
    let same = r1 == 0 && r2 == 0 && files_identical(&d.join("cal1"), &d.join("cal2"));
    checks.push(("calibrate", same));

    let first = std::fs::read(&report_path).unwrap();
    write_report(&read_report(&report_path).unwrap(), d.join("rewrite.json")).unwrap();
    checks.push(("report", std::fs::read(d.join("rewrite.json")).unwrap() == first));

    let failed: Vec<&str> = checks.iter().filter(|c| !c.1).map(|c| c.0).collect();
    (
        failed.is_empty(),
        if failed.is_empty() {
            format!("{} checks bitwise identical", checks.len())
        } else {
            format!("mismatch in {failed:?}")
        },
    )
}

fn run(label: &str, f: impl FnOnce() -> Outcome) -> bool {
    let start = Instant::now();
    let (ok, detail) = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|e| {
        let msg = e
            .downcast_ref::<String>()
            .cloned()
            .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
            .unwrap_or_default();
        (false, format!("panicked: {msg}"))
    });
    println!(
        "{} {label}: {detail} [{:.1} s]",
        if ok { "PASS" } else { "FAIL" },
        start.elapsed().as_secs_f64()
    );
    ok
}

fn main() {
    println!("\nacceptance criteria");
    let mut fused = (false, "noise sweep did not run".to_string());
    let mut results = vec![run("1 noise sweep", || {
        let (c1, c2) = noise_sweep();
        fused = c2;
        c1
    })];
    results.push(run("2 fused velocity", || fused));
    results.push(run("3 exact recovery", exact_recovery));
    results.push(run("4 scale ambiguity", scale_ambiguity));
    results.push(run("5 degeneracy detection", degeneracy));
    results.push(run("6 jacobian", jacobian_check));
    results.push(run("7 ransac robustness", ransac_robustness));
    results.push(run("8 grid-search oracle", grid_oracle));
    results.push(run("9 scale recovery", scale_recovery));
    results.push(run("10 round trip and determinism", round_trip_and_determinism));
    let passed = results.iter().filter(|r| **r).count();
    println!("{passed}/{} criteria passed\n", results.len());
    if passed != results.len() {
        std::process::exit(1);
    }
}
