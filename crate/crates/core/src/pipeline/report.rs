use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::PipelineConfig;
use super::formats::{read_json, write_json};
use crate::calib::{
    fused_ego_velocities, velocity_error_metric, CalibrationReport, MeasurementPair,
    VelocityErrorSeries, VelocityReference,
};
use crate::error::{Error, Result};

pub const REPORT_SCHEMA: &str = "radar-calib/calibration-report";
pub const REPORT_SCHEMA_VERSION: u32 = 1;

/// Where the calibrated pairs came from.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct InputSummary {
    pub source: String,
    /// Pairs after synchronization (or as read from a pair file).
    pub n_pairs: usize,
    /// Pairs left after the speed filter.
    pub n_pairs_filtered: usize,
    /// Scans whose ego-velocity could not be estimated.
    pub n_scans_failed: usize,
}

/// Residual magnitudes at the solution, m/s unless noted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResidualStats {
    /// `sqrt(cost / 4M)`, dimensionless
    pub rms_whitened: f64,
    pub rms_a: f64,
    pub rms_b: f64,
    pub max_a: f64,
    pub max_b: f64,
}

/// One calibration run as written to disk.
///
/// `error_table` lists, per solver time step, the raw and fused velocity error
/// magnitudes of both radars against the fused (model-consistent) velocities,
/// so the raw columns are the per-radar residuals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub schema: String,
    pub schema_version: u32,
    pub seed: u64,
    pub config: PipelineConfig,
    pub input: InputSummary,
    pub calibration: CalibrationReport,
    pub residuals: ResidualStats,
    /// Mean velocity error magnitude over the pairs used by the solver, m/s.
    pub velocity_error_metric: f64,
    pub error_table: VelocityErrorSeries,
}

fn rms(v: &[f64]) -> f64 {
    if v.is_empty() {
        return 0.0;
    }
    (v.iter().map(|x| x * x).sum::<f64>() / v.len() as f64).sqrt()
}

fn max(v: &[f64]) -> f64 {
    v.iter().copied().fold(0.0, f64::max)
}

impl RunReport {
    /// `pairs` are the solver's input, indexed by `calibration.used_indices`.
    pub fn new(
        calibration: CalibrationReport,
        pairs: &[MeasurementPair],
        config: PipelineConfig,
        seed: u64,
        input: InputSummary,
    ) -> Result<Self> {
        let table = fused_ego_velocities(&calibration, pairs, VelocityReference::Model)?;
        let used: Vec<MeasurementPair> = calibration.used_indices.iter().map(|&i| pairs[i]).collect();
        let metric = velocity_error_metric(&used, &calibration.extrinsics)?;
        let m = used.len().max(1) as f64;
        Ok(Self {
            schema: REPORT_SCHEMA.into(),
            schema_version: REPORT_SCHEMA_VERSION,
            seed,
            config,
            input,
            residuals: ResidualStats {
                rms_whitened: (calibration.final_cost / (4.0 * m)).sqrt(),
                rms_a: rms(&table.raw_a),
                rms_b: rms(&table.raw_b),
                max_a: max(&table.raw_a),
                max_b: max(&table.raw_b),
            },
            calibration,
            velocity_error_metric: metric,
            error_table: table,
        })
    }
}

pub fn write_report(report: &RunReport, path: impl AsRef<Path>) -> Result<()> {
    write_json(path, report)
}

pub fn read_report(path: impl AsRef<Path>) -> Result<RunReport> {
    let path = path.as_ref();
    let report: RunReport = read_json(path)?;
    if report.schema != REPORT_SCHEMA || report.schema_version != REPORT_SCHEMA_VERSION {
        return Err(Error::Parse {
            path: path.to_path_buf(),
            line: 0,
            message: format!(
                "unsupported report schema {} v{}",
                report.schema, report.schema_version
            ),
        });
    }
    Ok(report)
}
