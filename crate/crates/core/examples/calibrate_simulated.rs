//! Calibrates a simulated rig from noisy ego-velocity pairs.
//!
//! `cargo run --release --example calibrate_simulated -- [sigma] [duration]`

use radar_calib::calib::{solve_lm, SolverOptions};
use radar_calib::experiment::{axis_error, yaw_error};
use radar_calib::simulator::{generate_trajectory, simulate_pairs, NoiseSpec, TrajectoryProfile};

fn main() -> Result<(), radar_calib::error::Error> {
    let mut args = std::env::args().skip(1).map(|a| a.parse::<f64>().expect("numeric argument"));
    let sigma = args.next().unwrap_or(0.1);
    let duration = args.next().unwrap_or(60.0);

    let truth = generate_trajectory(&TrajectoryProfile::periodic(duration))?;
    let pairs = simulate_pairs(&truth, &NoiseSpec { sigma_r: sigma, rng_seed: 1, ..NoiseSpec::default() })?;
    let report = solve_lm(&pairs, &SolverOptions::default())?;

    let (est, gt) = (report.extrinsics, truth.extrinsics);
    println!("{} pairs, sigma {sigma} m/s, {duration} s", pairs.len());
    println!("             truth      initial    estimate   error(deg)");
    println!(
        "theta_t   {:>9.5}  {:>9.5}  {:>9.5}  {:.3}",
        gt.theta_t,
        report.initial_extrinsics.theta_t,
        est.theta_t,
        axis_error(est.theta_t, gt.theta_t).to_degrees()
    );
    println!(
        "theta_ba  {:>9.5}  {:>9.5}  {:>9.5}  {:.3}",
        gt.theta_ba,
        report.initial_extrinsics.theta_ba,
        est.theta_ba,
        yaw_error(est.theta_ba, gt.theta_ba).to_degrees()
    );
    if let Some(c) = report.extrinsic_covariance {
        println!("1-sigma (deg): {:.3} {:.3}", c[(0, 0)].sqrt().to_degrees(), c[(1, 1)].sqrt().to_degrees());
    }
    println!(
        "cost {:.1} -> {:.1} in {} iterations ({:?})",
        report.initial_cost, report.final_cost, report.iterations, report.termination
    );
    Ok(())
}
