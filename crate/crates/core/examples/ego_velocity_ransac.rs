//! Ego-velocity of a single radar scan, with and without gross outliers.
//!
//! `cargo run --example ego_velocity_ransac`

use radar_calib::ego_velocity::{build_lsq, ransac_fit, solve_ego_velocity, Detection, RadarScan, RansacConfig};
use radar_calib::geometry::Vec2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() -> Result<(), radar_calib::error::Error> {
    let velocity = Vec2::new(0.8, 2.5);
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut outlier = Vec::new();
    let detections: Vec<Detection> = (0..40)
        .map(|_| {
            let az: f64 = rng.random_range(-1.0..1.0);
            let mut rr = -(az.sin() * velocity.x + az.cos() * velocity.y) + rng.random_range(-0.01..0.01);
            let bad = rng.random_bool(0.3);
            if bad {
                rr += rng.random_range(1.0..3.0);
            }
            outlier.push(bad);
            Detection::new(rng.random_range(2.0..30.0), az, rr)
        })
        .collect();
    let scan = RadarScan::new(0.0, "a", detections);

    let plain = solve_ego_velocity(&build_lsq(&scan)?)?;
    let fit = ransac_fit(&scan, &RansacConfig::default())?;
    let rejected = outlier.iter().zip(&fit.inliers).filter(|(o, i)| **o && !**i).count();

    println!("truth            {:.3} {:.3}", velocity.x, velocity.y);
    println!("least squares    {:.3} {:.3}", plain.velocity.x, plain.velocity.y);
    println!("ransac           {:.3} {:.3}", fit.estimate.velocity.x, fit.estimate.velocity.y);
    println!(
        "inliers {}/{}, rejected {rejected} of {} outliers",
        fit.estimate.n_inliers,
        fit.estimate.n_total,
        outlier.iter().filter(|o| **o).count()
    );
    println!("covariance diag  {:.2e} {:.2e}", fit.estimate.covariance[(0, 0)], fit.estimate.covariance[(1, 1)]);
    Ok(())
}
