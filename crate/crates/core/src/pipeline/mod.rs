//! From scan files to calibration-ready pairs, and reports back to disk.

mod config;
mod formats;
mod report;
mod sync;

use rayon::prelude::*;

pub use config::PipelineConfig;
pub use formats::{
    format_pairs, format_scans, load_pairs, load_scans, parse_pairs, parse_scans, read_json,
    read_numeric_rows, write_json, write_numeric_rows, write_pairs, write_scans, ScanStreams,
    PAIR_HEADER, SCAN_HEADER,
};
pub use report::{
    read_report, write_report, InputSummary, ResidualStats, RunReport, REPORT_SCHEMA,
    REPORT_SCHEMA_VERSION,
};
pub use sync::{filter_pairs, is_moving, synchronize, Synchronizer};

use crate::calib::MeasurementPair;
use crate::ego_velocity::{ransac_ego_velocity, EgoVelocityEstimate, RadarScan, RansacConfig};
use crate::error::{Error, Result};

/// Ego-velocity estimates of one stream; failed scans are listed with the
/// reason.
#[derive(Debug)]
pub struct StreamEstimates {
    pub estimates: Vec<EgoVelocityEstimate>,
    pub failures: Vec<(f64, Error)>,
}

/// Runs RANSAC on every scan in parallel. The result does not depend on the
/// thread count since every scan seeds its own generator.
pub fn estimate_stream(scans: &[RadarScan], cfg: &RansacConfig) -> Result<StreamEstimates> {
    cfg.validate()?;
    let results: Vec<_> = scans
        .par_iter()
        .map(|s| (s.timestamp, ransac_ego_velocity(s, cfg)))
        .collect();
    let mut out = StreamEstimates {
        estimates: Vec::with_capacity(results.len()),
        failures: Vec::new(),
    };
    for (t, r) in results {
        match r {
            Ok(e) => out.estimates.push(e),
            Err(e) => {
                log::debug!("scan at {t}: {e}");
                out.failures.push((t, e));
            }
        }
    }
    Ok(out)
}

/// Pairs ready for calibration plus bookkeeping about what was dropped.
#[derive(Debug)]
pub struct PreparedPairs {
    /// Synchronized pairs that passed the speed filter.
    pub pairs: Vec<MeasurementPair>,
    pub n_synchronized: usize,
    pub failures_a: Vec<(f64, Error)>,
    pub failures_b: Vec<(f64, Error)>,
}

impl PreparedPairs {
    pub fn summary(&self, source: impl Into<String>) -> InputSummary {
        InputSummary {
            source: source.into(),
            n_pairs: self.n_synchronized,
            n_pairs_filtered: self.pairs.len(),
            n_scans_failed: self.failures_a.len() + self.failures_b.len(),
        }
    }
}

/// Ego-velocity estimation, synchronization onto radar a's clock and speed
/// filtering. A radar whose every scan fails yields that scan's error.
pub fn prepare_pairs(streams: &ScanStreams, config: &PipelineConfig) -> Result<PreparedPairs> {
    config.validate()?;
    let get = |id: &str| {
        streams
            .get(id)
            .ok_or_else(|| Error::InvalidArgument(format!("no scans from radar {id:?}")))
    };
    let scans_a = get(&config.radar_a)?;
    let scans_b = get(&config.radar_b)?;
    let mut est_a = estimate_stream(scans_a, &config.ransac)?;
    let mut est_b = estimate_stream(scans_b, &config.ransac)?;
    for est in [&mut est_a, &mut est_b] {
        if est.estimates.is_empty() && !est.failures.is_empty() {
            return Err(est.failures.swap_remove(0).1);
        }
    }
    let synced = synchronize(&est_a.estimates, &est_b.estimates, config.sync_max_gap)?;
    Ok(PreparedPairs {
        pairs: filter_pairs(&synced, config.min_speed),
        n_synchronized: synced.len(),
        failures_a: est_a.failures,
        failures_b: est_b.failures,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ego_velocity::Detection;
    use crate::simulator::{
        generate_landmarks, generate_trajectory, simulate_scans, LandmarkField, NoiseSpec,
        SensorModel, TrajectoryProfile,
    };

    #[test]
    fn simulated_scans_become_accurate_pairs() {
        let truth = generate_trajectory(&TrajectoryProfile::periodic(10.0)).unwrap();
        let lm = generate_landmarks(&truth, &LandmarkField::default(), 3).unwrap();
        let noise = NoiseSpec { outlier_fraction: 0.2, rng_seed: 3, ..NoiseSpec::default() };
        let sim = simulate_scans(&truth, &lm, &SensorModel::default(), &noise).unwrap();
        let mut streams = ScanStreams::new();
        streams.insert("a".into(), sim.a.scans);
        streams.insert("b".into(), sim.b.scans);
        let prepared = prepare_pairs(&streams, &PipelineConfig::default()).unwrap();
        assert_eq!(prepared.pairs.len(), truth.len());
        for (p, i) in prepared.pairs.iter().zip(0..) {
            assert!((p.h_a.velocity - truth.v_a[i]).norm() < 0.05);
            assert!((p.h_b.velocity - truth.velocity_b(i)).norm() < 0.05);
        }
    }

    #[test]
    fn missing_radar_and_total_failure() {
        let mut streams = ScanStreams::new();
        streams.insert("a".into(), vec![RadarScan::new(0.0, "a", vec![Detection::new(1.0, 0.0, 0.0)])]);
        assert!(matches!(
            prepare_pairs(&streams, &PipelineConfig::default()),
            Err(Error::InvalidArgument(_))
        ));
        streams.insert("b".into(), vec![RadarScan::new(0.0, "b", vec![])]);
        assert!(prepare_pairs(&streams, &PipelineConfig::default()).is_err());
    }
}
