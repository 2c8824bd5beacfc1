//! Detection-level pipeline: scans on disk, RANSAC, synchronization,
//! calibration and a report file.
//!
//! `cargo run --release --example scan_pipeline -- [out_dir]`

use std::path::PathBuf;

use radar_calib::calib::solve_lm;
use radar_calib::pipeline::{load_scans, prepare_pairs, write_report, write_scans, PipelineConfig, RunReport};
use radar_calib::simulator::{
    generate_landmarks, generate_trajectory, simulate_scans, LandmarkField, NoiseSpec, SensorModel,
    TrajectoryProfile,
};

fn main() -> Result<(), radar_calib::error::Error> {
    let out = std::env::args().nth(1).map_or_else(|| std::env::temp_dir().join("radar-calib-demo"), PathBuf::from);
    std::fs::create_dir_all(&out).map_err(|e| radar_calib::error::Error::Io { path: out.clone(), source: e })?;

    let truth = generate_trajectory(&TrajectoryProfile::periodic(30.0))?;
    let landmarks = generate_landmarks(&truth, &LandmarkField::default(), 1)?;
    let noise = NoiseSpec { outlier_fraction: 0.2, rng_seed: 1, ..NoiseSpec::default() };
    let sim = simulate_scans(&truth, &landmarks, &SensorModel::default(), &noise)?;
    let scan_path = out.join("scans.txt");
    write_scans(&scan_path, sim.a.scans.iter().chain(&sim.b.scans))?;

    let config = PipelineConfig::default();
    let prepared = prepare_pairs(&load_scans(&scan_path)?, &config)?;
    let calib = solve_lm(&prepared.pairs, &config.solver)?;
    let seed = config.ransac.rng_seed;
    let report = RunReport::new(calib, &prepared.pairs, config, seed, prepared.summary(scan_path.display().to_string()))?;
    write_report(&report, out.join("report.json"))?;

    let e = report.calibration.extrinsics;
    println!("{} pairs from {} scans", prepared.pairs.len(), sim.a.scans.len() + sim.b.scans.len());
    println!("theta_t  {:.4} (truth {:.4})", e.theta_t, truth.extrinsics.theta_t);
    println!("theta_ba {:.4} (truth {:.4})", e.theta_ba, truth.extrinsics.theta_ba);
    println!("report written to {}", out.join("report.json").display());
    Ok(())
}
