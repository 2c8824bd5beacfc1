//! Metric lever-arm length from an external yaw-rate reference.
//!
//! `cargo run --release --example scale_recovery`

use radar_calib::calib::{solve_lm, SolverOptions};
use radar_calib::scale::{
    recover_scale, smooth_angular_rate_from_poses, AngularRateSeries, HeadingSeries, SmootherConfig,
};
use radar_calib::simulator::{generate_trajectory, simulate_pairs, NoiseSpec, Rig, TrajectoryProfile};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

fn main() -> Result<(), radar_calib::error::Error> {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let gyro = Normal::new(0.0, 0.02).expect("valid sigma");
    for norm in [0.8, 2.0, 5.68] {
        let rig = Rig { translation_norm: norm, ..Rig::default() };
        let truth = generate_trajectory(&TrajectoryProfile::periodic(60.0).with_rig(rig))?;
        let pairs = simulate_pairs(&truth, &NoiseSpec { sigma_r: 0.05, rng_seed: 5, ..NoiseSpec::default() })?;
        let report = solve_lm(&pairs, &SolverOptions::default())?;

        let noisy: Vec<f64> = truth.omega.iter().map(|w| w + gyro.sample(&mut rng)).collect();
        let rates = AngularRateSeries::new(truth.times.clone(), noisy, "gyro")?;
        let from_rates = recover_scale(&report, &rates, 0.1)?;

        let headings = HeadingSeries::new(truth.times.clone(), truth.heading.clone())?;
        let smoothed = smooth_angular_rate_from_poses(&headings, &SmootherConfig::default())?;
        let from_poses = recover_scale(&report, &smoothed, 0.1)?;

        println!(
            "|t| = {norm:.2} m: gyro {:.3} m ({} samples), poses {:.3} m",
            from_rates.translation_magnitude, from_rates.n_samples_used, from_poses.translation_magnitude
        );
    }
    Ok(())
}
