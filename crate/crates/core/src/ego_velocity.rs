//! Instantaneous 2D ego-velocity from one radar scan.
//!
//! For a static target at azimuth `θ` the measured range-rate is
//! `ṙ = -[sin θ, cos θ] · h`, where `h` is the radar's velocity in its own
//! frame. Azimuth is measured from the radar's +y (boresight) axis towards +x.
//! Stacking all detections gives the linear system `y = A h` with rows
//! `[sin θ_i, cos θ_i]` and `y_i = -ṙ_i`, solved by least squares inside a
//! RANSAC loop that rejects moving targets and multipath returns.

use nalgebra::{DMatrix, DVector};
use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{serde_mat2, serde_vec2, Mat2, Vec2};

/// Largest accepted condition number of `AᵀA`.
pub const DEFAULT_CONDITION_CAP: f64 = 1e8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    /// meters, strictly positive
    pub range: f64,
    /// radians from boresight (+y) towards +x
    pub azimuth: f64,
    /// m/s, positive when the target recedes
    pub range_rate: f64,
}

impl Detection {
    pub fn new(range: f64, azimuth: f64, range_rate: f64) -> Self {
        Self {
            range,
            azimuth,
            range_rate,
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.range > 0.0) || !self.range.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "detection range must be positive and finite, got {}",
                self.range
            )));
        }
        if !self.azimuth.is_finite() || !self.range_rate.is_finite() {
            return Err(Error::InvalidArgument(
                "detection azimuth and range-rate must be finite".into(),
            ));
        }
        Ok(())
    }

    /// Row of the design matrix for this detection.
    #[inline]
    pub fn direction(&self) -> Vec2 {
        let (s, c) = self.azimuth.sin_cos();
        Vec2::new(s, c)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RadarScan {
    pub timestamp: f64,
    pub radar_id: String,
    pub detections: Vec<Detection>,
}

impl RadarScan {
    pub fn new(timestamp: f64, radar_id: impl Into<String>, detections: Vec<Detection>) -> Self {
        Self {
            timestamp,
            radar_id: radar_id.into(),
            detections,
        }
    }
}

/// `y = A h` for one scan.
#[derive(Debug, Clone, PartialEq)]
pub struct LsqSystem {
    pub timestamp: f64,
    /// N×2, row i = `[sin θ_i, cos θ_i]`
    pub design: DMatrix<f64>,
    /// `y_i = -ṙ_i`
    pub observations: DVector<f64>,
}

impl LsqSystem {
    pub fn len(&self) -> usize {
        self.observations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.observations.is_empty()
    }

    fn row(&self, i: usize) -> Vec2 {
        Vec2::new(self.design[(i, 0)], self.design[(i, 1)])
    }

    /// `ε = y - A h`
    pub fn residuals(&self, velocity: &Vec2) -> DVector<f64> {
        &self.observations - &self.design * velocity
    }

    fn subset(&self, rows: &[usize]) -> LsqSystem {
        LsqSystem {
            timestamp: self.timestamp,
            design: self.design.select_rows(rows),
            observations: self.observations.select_rows(rows),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EgoVelocityEstimate {
    #[serde(with = "serde_vec2")]
    pub velocity: Vec2,
    #[serde(with = "serde_mat2")]
    pub covariance: Mat2,
    pub n_inliers: usize,
    pub n_total: usize,
    pub timestamp: f64,
}

impl EgoVelocityEstimate {
    /// An estimate with isotropic covariance `σ² I`, as produced by the
    /// pair-level simulator.
    pub fn isotropic(timestamp: f64, velocity: Vec2, sigma: f64) -> Self {
        Self {
            velocity,
            covariance: Mat2::identity() * (sigma * sigma),
            n_inliers: 0,
            n_total: 0,
            timestamp,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RansacConfig {
    /// Minimum consensus set size as a fraction of all detections.
    pub inlier_fraction_threshold: f64,
    /// Largest |ε_i| (m/s) for a detection to count as an inlier.
    pub residual_threshold: f64,
    /// Hypothesis budget. When the scan has at most this many detection pairs,
    /// every pair is tried instead of sampling.
    pub max_iterations: usize,
    pub rng_seed: u64,
    pub condition_cap: f64,
}

impl Default for RansacConfig {
    fn default() -> Self {
        Self {
            inlier_fraction_threshold: 0.40,
            residual_threshold: 0.025,
            max_iterations: 1000,
            rng_seed: 0,
            condition_cap: DEFAULT_CONDITION_CAP,
        }
    }
}

impl RansacConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.inlier_fraction_threshold > 0.0 && self.inlier_fraction_threshold <= 1.0) {
            return Err(Error::InvalidArgument(format!(
                "inlier_fraction_threshold must lie in (0, 1], got {}",
                self.inlier_fraction_threshold
            )));
        }
        if !(self.residual_threshold > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "residual_threshold must be positive, got {}",
                self.residual_threshold
            )));
        }
        if self.max_iterations == 0 {
            return Err(Error::InvalidArgument("max_iterations must be positive".into()));
        }
        Ok(())
    }

    /// Seed used for one scan: the configured seed mixed with the bits of the
    /// scan timestamp, so results do not depend on processing order.
    pub fn scan_seed(&self, timestamp: f64) -> u64 {
        splitmix64(self.rng_seed.wrapping_add(splitmix64(timestamp.to_bits())))
    }
}

pub(crate) fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn build_lsq(scan: &RadarScan) -> Result<LsqSystem> {
    if scan.detections.is_empty() {
        return Err(Error::EmptyInput(format!(
            "scan at t={} from radar '{}' has no detections",
            scan.timestamp, scan.radar_id
        )));
    }
    let n = scan.detections.len();
    let mut design = DMatrix::zeros(n, 2);
    let mut observations = DVector::zeros(n);
    for (i, d) in scan.detections.iter().enumerate() {
        d.validate()?;
        let (s, c) = d.azimuth.sin_cos();
        design[(i, 0)] = s;
        design[(i, 1)] = c;
        observations[i] = -d.range_rate;
    }
    Ok(LsqSystem {
        timestamp: scan.timestamp,
        design,
        observations,
    })
}

/// Least-squares ego-velocity `(AᵀA)⁻¹Aᵀy` with covariance
/// `εᵀε / (N - 2) · (AᵀA)⁻¹`.
pub fn solve_ego_velocity(system: &LsqSystem) -> Result<EgoVelocityEstimate> {
    solve_with_cap(system, DEFAULT_CONDITION_CAP)
}

fn solve_with_cap(system: &LsqSystem, condition_cap: f64) -> Result<EgoVelocityEstimate> {
    let n = system.len();
    if n < 3 {
        return Err(Error::InsufficientData(format!(
            "ego-velocity needs at least 3 detections, got {n}"
        )));
    }
    let mut normal = Mat2::zeros();
    let mut rhs = Vec2::zeros();
    for i in 0..n {
        let a = system.row(i);
        normal += a * a.transpose();
        rhs += a * system.observations[i];
    }
    let cond = symmetric_condition(&normal);
    if !(cond <= condition_cap) {
        return Err(Error::DegenerateGeometry(format!(
            "AᵀA condition number {cond:.3e} exceeds {condition_cap:.1e}; azimuths nearly collinear"
        )));
    }
    let inverse = normal
        .try_inverse()
        .ok_or_else(|| Error::DegenerateGeometry("AᵀA is singular".into()))?;
    let velocity = inverse * rhs;
    let eps = system.residuals(&velocity);
    let scale = eps.norm_squared() / (n as f64 - 2.0);
    let mut covariance = inverse * scale;
    covariance = 0.5 * (covariance + covariance.transpose());
    Ok(EgoVelocityEstimate {
        velocity,
        covariance,
        n_inliers: n,
        n_total: n,
        timestamp: system.timestamp,
    })
}

/// Ratio of eigenvalues of a symmetric 2×2 matrix; infinite when singular.
pub(crate) fn symmetric_condition(m: &Mat2) -> f64 {
    let a = m[(0, 0)];
    let b = 0.5 * (m[(0, 1)] + m[(1, 0)]);
    let d = m[(1, 1)];
    let mean = 0.5 * (a + d);
    let rad = (0.25 * (a - d) * (a - d) + b * b).sqrt();
    let hi = mean + rad;
    let lo = mean - rad;
    if lo <= 0.0 {
        f64::INFINITY
    } else {
        hi / lo
    }
}

/// A RANSAC fit together with the consensus mask over the scan's detections.
#[derive(Debug, Clone, PartialEq)]
pub struct RansacFit {
    pub estimate: EgoVelocityEstimate,
    pub inliers: Vec<bool>,
}

pub fn ransac_ego_velocity(scan: &RadarScan, cfg: &RansacConfig) -> Result<EgoVelocityEstimate> {
    ransac_fit(scan, cfg).map(|fit| fit.estimate)
}

/// Minimal-sample RANSAC over detection pairs followed by a least-squares
/// refit on the consensus set. Hypotheses are scored by inlier count, ties
/// broken by the lower inlier RMS residual.
pub fn ransac_fit(scan: &RadarScan, cfg: &RansacConfig) -> Result<RansacFit> {
    cfg.validate()?;
    let system = build_lsq(scan)?;
    let n = system.len();
    if n < 3 {
        return Err(Error::InsufficientData(format!(
            "RANSAC needs at least 3 detections, got {n}"
        )));
    }

    let mut best: Option<(usize, f64, Vec2)> = None;
    let mut consider = |i: usize, j: usize| {
        let Some(h) = two_point_velocity(&system, i, j) else {
            return;
        };
        let (count, rms) = score(&system, &h, cfg.residual_threshold);
        let better = match best {
            None => true,
            Some((bc, brms, _)) => count > bc || (count == bc && rms < brms),
        };
        if better {
            best = Some((count, rms, h));
        }
    };

    let n_pairs = n * (n - 1) / 2;
    if n_pairs <= cfg.max_iterations {
        for i in 0..n {
            for j in (i + 1)..n {
                consider(i, j);
            }
        }
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.scan_seed(scan.timestamp));
        for _ in 0..cfg.max_iterations {
            let sample = index::sample(&mut rng, n, 2);
            consider(sample.index(0), sample.index(1));
        }
    }

    let Some((_, _, hypothesis)) = best else {
        return Err(Error::DegenerateGeometry(
            "every detection pair has parallel azimuths".into(),
        ));
    };

    let mut mask = inlier_mask(&system, &hypothesis, cfg.residual_threshold);
    let mut estimate = None;
    // Refit until the consensus set stops changing.
    for _ in 0..5 {
        let rows: Vec<usize> = (0..n).filter(|&i| mask[i]).collect();
        check_fraction(rows.len(), n, cfg)?;
        let mut fit = solve_with_cap(&system.subset(&rows), cfg.condition_cap)?;
        fit.n_total = n;
        let next = inlier_mask(&system, &fit.velocity, cfg.residual_threshold);
        let settled = next == mask;
        estimate = Some(fit);
        if settled {
            break;
        }
        mask = next;
    }
    let estimate = estimate.expect("refit loop runs at least once");
    Ok(RansacFit {
        estimate,
        inliers: mask,
    })
}

fn check_fraction(count: usize, n: usize, cfg: &RansacConfig) -> Result<()> {
    let fraction = count as f64 / n as f64;
    if count < 3 || fraction < cfg.inlier_fraction_threshold {
        return Err(Error::NoConsensus {
            fraction,
            threshold: cfg.inlier_fraction_threshold,
        });
    }
    Ok(())
}

fn two_point_velocity(system: &LsqSystem, i: usize, j: usize) -> Option<Vec2> {
    let a = Mat2::from_rows(&[system.row(i).transpose(), system.row(j).transpose()]);
    if a.determinant().abs() < 1e-6 {
        return None;
    }
    let y = Vec2::new(system.observations[i], system.observations[j]);
    a.try_inverse().map(|inv| inv * y)
}

fn score(system: &LsqSystem, h: &Vec2, threshold: f64) -> (usize, f64) {
    let mut count = 0;
    let mut sq = 0.0;
    for i in 0..system.len() {
        let e = system.observations[i] - system.row(i).dot(h);
        if e.abs() <= threshold {
            count += 1;
            sq += e * e;
        }
    }
    let rms = if count > 0 {
        (sq / count as f64).sqrt()
    } else {
        f64::INFINITY
    };
    (count, rms)
}

fn inlier_mask(system: &LsqSystem, h: &Vec2, threshold: f64) -> Vec<bool> {
    (0..system.len())
        .map(|i| (system.observations[i] - system.row(i).dot(h)).abs() <= threshold)
        .collect()
}
