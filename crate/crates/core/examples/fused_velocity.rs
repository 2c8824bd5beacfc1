//! Raw versus fused ego-velocity error against ground truth.
//!
//! `cargo run --release --example fused_velocity`

use radar_calib::calib::{fused_ego_velocities, solve_lm, SolverOptions, VelocityReference};
use radar_calib::simulator::{generate_trajectory, simulate_pairs, NoiseSpec, TrajectoryProfile};

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    v[v.len() / 2]
}

fn main() -> Result<(), radar_calib::error::Error> {
    let truth = generate_trajectory(&TrajectoryProfile::periodic(120.0))?;
    let pairs = simulate_pairs(&truth, &NoiseSpec { sigma_r: 0.2, rng_seed: 11, ..NoiseSpec::default() })?;
    let report = solve_lm(&pairs, &SolverOptions::default())?;
    let reference = truth.truth_velocities();
    let s = fused_ego_velocities(&report, &pairs, VelocityReference::Truth(&reference))?;

    for (name, raw, fused) in [("a", &s.raw_a, &s.fused_a), ("b", &s.raw_b, &s.fused_b)] {
        let (r, f) = (median(raw.clone()), median(fused.clone()));
        println!("radar {name}: raw {:.1} cm/s, fused {:.1} cm/s, gain {:.1} cm/s", 100.0 * r, 100.0 * f, 100.0 * (r - f));
    }
    Ok(())
}
