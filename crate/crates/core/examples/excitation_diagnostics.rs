//! Which motions make the calibration identifiable.
//!
//! `cargo run --example excitation_diagnostics`

use radar_calib::calib::Extrinsics;
use radar_calib::identifiability::{excitation_report, ExcitationThresholds};
use radar_calib::simulator::{generate_trajectory, simulate_pairs, NoiseSpec, TrajectoryKind, TrajectoryProfile};

fn main() -> Result<(), radar_calib::error::Error> {
    let cases = [
        ("periodic", TrajectoryKind::default()),
        ("constant omega", TrajectoryKind::ConstantOmega { velocity: [1.0, 0.3], omega: 0.5 }),
        ("straight line", TrajectoryKind::StraightLine { velocity: [1.0, 0.3] }),
    ];
    println!("{:<16} {:>10} {:>12}  flags", "motion", "degenerate", "mean |det|");
    for (name, kind) in cases {
        let truth = generate_trajectory(&TrajectoryProfile::periodic(30.0).with_kind(kind))?;
        let pairs = simulate_pairs(&truth, &NoiseSpec { sigma_r: 0.0, ..NoiseSpec::default() })?;
        let guess: Extrinsics = truth.extrinsics;
        let r = excitation_report(&pairs, &guess, &ExcitationThresholds::default())?;
        println!("{name:<16} {:>9.1}% {:>12.3e}  {:?}", 100.0 * r.fraction_degenerate, r.mean_abs_det, r.flags);
    }
    Ok(())
}
