//! Monte-Carlo noise sweep; writes per-cell and per-trial tables.
//!
//! `cargo run --release --example noise_sweep -- [trials] [out_dir]`

use std::path::PathBuf;

use radar_calib::calib::SolverOptions;
use radar_calib::experiment::{run_matrix, ExperimentConfig, TrialResult};
use radar_calib::pipeline::write_numeric_rows;

fn main() -> Result<(), radar_calib::error::Error> {
    let mut args = std::env::args().skip(1);
    let trials = args.next().map_or(100, |a| a.parse().expect("trial count"));
    let out = args.next().map(PathBuf::from);

    let config = ExperimentConfig { trials, durations: vec![15.0, 120.0], ..ExperimentConfig::default() };
    let results = run_matrix(&config, &SolverOptions::default(), 0.05, None)?;

    println!("sigma  duration  theta_t(deg)  theta_ba(deg)  raw_a   fused_a  failed");
    for c in &results.cells {
        println!(
            "{:<5}  {:>8}  {:>12.3}  {:>13.3}  {:.4}  {:.4}   {}",
            c.sigma,
            c.duration,
            c.median_theta_t_error_deg,
            c.median_theta_ba_error_deg,
            c.median_raw_error_a,
            c.median_fused_error_a,
            c.n_failed
        );
    }
    if let Some(dir) = out {
        std::fs::create_dir_all(&dir).map_err(|e| radar_calib::error::Error::Io { path: dir.clone(), source: e })?;
        let rows: Vec<Vec<f64>> = results
            .trials
            .iter()
            .filter_map(|t| match &t.result {
                TrialResult::Solved(m) => {
                    Some(vec![t.sigma, t.duration, m.theta_t_error_deg, m.theta_ba_error_deg])
                }
                TrialResult::Failed { .. } => None,
            })
            .collect();
        write_numeric_rows(dir.join("errors.csv"), "sigma,duration,theta_t_err_deg,theta_ba_err_deg", &rows)?;
        println!("wrote {}", dir.join("errors.csv").display());
    }
    Ok(())
}
