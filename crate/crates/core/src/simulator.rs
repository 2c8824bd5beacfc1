//! Synthetic rigs: ground-truth trajectories, paired ego-velocity
//! measurements and detection-level radar scans.
//!
//! Velocities are expressed in the body frame of radar a. The world pose of
//! radar a is integrated from the body velocity and yaw rate; radar b sits at
//! `p + R(ψ) t` with heading `ψ - θ_ba`, so that its body-frame velocity is
//! `R(θ_ba)(ω perp(t) + v_a)`.

use std::f64::consts::{PI, TAU};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Uniform};
use serde::{Deserialize, Serialize};

use crate::calib::{Extrinsics, MeasurementPair, MotionState, TruthVelocity};
use crate::ego_velocity::{splitmix64, Detection, EgoVelocityEstimate, RadarScan};
use crate::error::{Error, Result};
use crate::geometry::{perp, rotation, serde_vec2, serde_vec2_list, unit, Vec2};

/// Independent seed for a named sub-stream of a base seed.
pub fn derive_seed(base: u64, stream: u64) -> u64 {
    splitmix64(base ^ splitmix64(stream))
}

const PAIR_STREAM: u64 = 1;
const SCAN_STREAM: u64 = 2;
const LANDMARK_STREAM: u64 = 3;

/// `amplitude · sin(2π · frequency · t + phase)`
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Harmonic {
    pub amplitude: f64,
    /// Hz
    pub frequency: f64,
    pub phase: f64,
}

/// A constant plus a sum of harmonics.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Signal {
    pub offset: f64,
    pub harmonics: Vec<Harmonic>,
}

impl Signal {
    pub fn constant(offset: f64) -> Self {
        Self {
            offset,
            harmonics: Vec::new(),
        }
    }

    /// Value and time derivative at `t`.
    pub fn eval(&self, t: f64) -> (f64, f64) {
        self.harmonics
            .iter()
            .fold((self.offset, 0.0), |(v, d), h| {
                let w = TAU * h.frequency;
                let (s, c) = (w * t + h.phase).sin_cos();
                (v + h.amplitude * s, d + h.amplitude * w * c)
            })
    }

    fn is_finite(&self) -> bool {
        self.offset.is_finite()
            && self
                .harmonics
                .iter()
                .all(|h| h.amplitude.is_finite() && h.frequency.is_finite() && h.phase.is_finite())
    }
}

/// Parameters of the default excitation trajectory
///
/// ```text
/// v_a(t) = (V₁ sin(2πt/T) + c₁, V₂ cos(4πt/T) + c₂)
/// ω(t)   = W sin(2πt/T + φ)
/// ```
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PeriodicParams {
    /// T, seconds
    pub period: f64,
    /// (V₁, V₂), m/s
    pub velocity_amplitude: [f64; 2],
    /// (c₁, c₂), m/s
    pub velocity_offset: [f64; 2],
    /// W, rad/s
    pub omega_amplitude: f64,
    /// φ, rad
    pub omega_phase: f64,
}

impl Default for PeriodicParams {
    fn default() -> Self {
        Self {
            period: 15.0,
            velocity_amplitude: [0.6, 0.4],
            velocity_offset: [1.0, 0.3],
            omega_amplitude: 1.0,
            omega_phase: 0.3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TrajectoryKind {
    PeriodicDefault(PeriodicParams),
    ConstantOmega { velocity: [f64; 2], omega: f64 },
    StraightLine { velocity: [f64; 2] },
    CustomHarmonics { vx: Signal, vy: Signal, omega: Signal },
}

impl Default for TrajectoryKind {
    fn default() -> Self {
        TrajectoryKind::PeriodicDefault(PeriodicParams::default())
    }
}

impl TrajectoryKind {
    /// Body velocity `v_a` with its derivative, yaw rate `ω` and yaw
    /// acceleration `α` at time `t`.
    pub fn eval(&self, t: f64) -> (Vec2, Vec2, f64, f64) {
        match self {
            TrajectoryKind::PeriodicDefault(p) => {
                let w = TAU / p.period;
                let (sx, cx) = (w * t).sin_cos();
                let (sy, cy) = (2.0 * w * t).sin_cos();
                let (so, co) = (w * t + p.omega_phase).sin_cos();
                let [v1, v2] = p.velocity_amplitude;
                let [c1, c2] = p.velocity_offset;
                (
                    Vec2::new(v1 * sx + c1, v2 * cy + c2),
                    Vec2::new(v1 * w * cx, -2.0 * v2 * w * sy),
                    p.omega_amplitude * so,
                    p.omega_amplitude * w * co,
                )
            }
            TrajectoryKind::ConstantOmega { velocity, omega } => {
                (Vec2::from(*velocity), Vec2::zeros(), *omega, 0.0)
            }
            TrajectoryKind::StraightLine { velocity } => {
                (Vec2::from(*velocity), Vec2::zeros(), 0.0, 0.0)
            }
            TrajectoryKind::CustomHarmonics { vx, vy, omega } => {
                let (x, dx) = vx.eval(t);
                let (y, dy) = vy.eval(t);
                let (w, dw) = omega.eval(t);
                (Vec2::new(x, y), Vec2::new(dx, dy), w, dw)
            }
        }
    }

    fn validate(&self) -> Result<()> {
        let ok = match self {
            TrajectoryKind::PeriodicDefault(p) => {
                p.period > 0.0
                    && p.period.is_finite()
                    && p.velocity_amplitude.iter().chain(&p.velocity_offset).all(|x| x.is_finite())
                    && p.omega_amplitude.is_finite()
                    && p.omega_phase.is_finite()
            }
            TrajectoryKind::ConstantOmega { velocity, omega } => {
                velocity.iter().all(|x| x.is_finite()) && omega.is_finite()
            }
            TrajectoryKind::StraightLine { velocity } => velocity.iter().all(|x| x.is_finite()),
            TrajectoryKind::CustomHarmonics { vx, vy, omega } => {
                vx.is_finite() && vy.is_finite() && omega.is_finite()
            }
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidArgument(
                "trajectory parameters must be finite with a positive period".into(),
            ))
        }
    }
}

/// Mounting of radar b relative to radar a.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Rig {
    pub theta_t: f64,
    pub theta_ba: f64,
    /// ‖t‖, meters
    pub translation_norm: f64,
}

impl Default for Rig {
    fn default() -> Self {
        Self {
            theta_t: 1.74,
            theta_ba: -1.58,
            translation_norm: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrajectoryProfile {
    #[serde(flatten)]
    pub kind: TrajectoryKind,
    /// seconds
    pub duration: f64,
    /// Hz
    pub rate: f64,
    pub rig: Rig,
}

impl Default for TrajectoryProfile {
    fn default() -> Self {
        Self {
            kind: TrajectoryKind::default(),
            duration: 15.0,
            rate: 20.0,
            rig: Rig::default(),
        }
    }
}

impl TrajectoryProfile {
    pub fn periodic(duration: f64) -> Self {
        Self {
            duration,
            ..Self::default()
        }
    }

    pub fn with_kind(mut self, kind: TrajectoryKind) -> Self {
        self.kind = kind;
        self
    }

    pub fn with_rig(mut self, rig: Rig) -> Self {
        self.rig = rig;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.duration > 0.0 && self.duration.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "duration must be positive, got {}",
                self.duration
            )));
        }
        if !(self.rate > 0.0 && self.rate.is_finite()) {
            return Err(Error::InvalidArgument(format!("rate must be positive, got {}", self.rate)));
        }
        if !(self.rig.translation_norm > 0.0 && self.rig.translation_norm.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "translation norm must be positive, got {}",
                self.rig.translation_norm
            )));
        }
        if !self.rig.theta_t.is_finite() || !self.rig.theta_ba.is_finite() {
            return Err(Error::InvalidArgument("rig angles must be finite".into()));
        }
        self.kind.validate()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub times: Vec<f64>,
    /// Body velocity of radar a, m/s.
    #[serde(with = "serde_vec2_list")]
    pub v_a: Vec<Vec2>,
    /// rad/s
    pub omega: Vec<f64>,
    /// rad/s²
    pub alpha: Vec<f64>,
    /// World heading of radar a, rad (unwrapped).
    pub heading: Vec<f64>,
    /// World position of radar a, m.
    #[serde(with = "serde_vec2_list")]
    pub position: Vec<Vec2>,
    /// Extrinsics in their wrapped form.
    pub extrinsics: Extrinsics,
    /// Metric translation of radar b in the frame of radar a.
    #[serde(with = "serde_vec2")]
    pub translation: Vec2,
}

impl GroundTruth {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Motion states in the unit-translation gauge of the wrapped
    /// extrinsics: `ω_γ = ω · (t · t̂)`.
    pub fn motion_states(&self) -> Vec<MotionState> {
        let gauge = self.translation.dot(&self.extrinsics.translation_axis());
        self.v_a
            .iter()
            .zip(&self.omega)
            .map(|(v, w)| MotionState::new(*v, w * gauge))
            .collect()
    }

    /// Noise-free velocity of radar b in its own frame at step `i`.
    pub fn velocity_b(&self, i: usize) -> Vec2 {
        rotation(self.extrinsics.theta_ba) * (perp(&self.translation) * self.omega[i] + self.v_a[i])
    }

    pub fn truth_velocities(&self) -> Vec<TruthVelocity> {
        (0..self.len())
            .map(|i| TruthVelocity {
                a: self.v_a[i],
                b: self.velocity_b(i),
            })
            .collect()
    }
}

/// Samples the trajectory at `rate` over `[0, duration]` and integrates the
/// world pose of radar a from the origin, heading 0.
pub fn generate_trajectory(profile: &TrajectoryProfile) -> Result<GroundTruth> {
    profile.validate()?;
    let dt = 1.0 / profile.rate;
    let n = (profile.duration * profile.rate).floor() as usize + 1;
    let kind = &profile.kind;

    let mut truth = GroundTruth {
        times: Vec::with_capacity(n),
        v_a: Vec::with_capacity(n),
        omega: Vec::with_capacity(n),
        alpha: Vec::with_capacity(n),
        heading: Vec::with_capacity(n),
        position: Vec::with_capacity(n),
        extrinsics: Extrinsics::new(profile.rig.theta_t, profile.rig.theta_ba),
        translation: unit(profile.rig.theta_t) * profile.rig.translation_norm,
    };

    // RK4 on (ψ, p) with four substeps per sample
    let deriv = |t: f64, psi: f64| {
        let (v, _, w, _) = kind.eval(t);
        (w, rotation(psi) * v)
    };
    let substeps = 4;
    let h = dt / substeps as f64;
    let (mut psi, mut p) = (0.0, Vec2::zeros());
    for i in 0..n {
        let t = i as f64 * dt;
        if i > 0 {
            let mut s = (i - 1) as f64 * dt;
            for _ in 0..substeps {
                let (k1w, k1p) = deriv(s, psi);
                let (k2w, k2p) = deriv(s + 0.5 * h, psi + 0.5 * h * k1w);
                let (k3w, k3p) = deriv(s + 0.5 * h, psi + 0.5 * h * k2w);
                let (k4w, k4p) = deriv(s + h, psi + h * k3w);
                psi += h / 6.0 * (k1w + 2.0 * k2w + 2.0 * k3w + k4w);
                p += (k1p + 2.0 * k2p + 2.0 * k3p + k4p) * (h / 6.0);
                s += h;
            }
        }
        let (v, _, w, a) = kind.eval(t);
        truth.times.push(t);
        truth.v_a.push(v);
        truth.omega.push(w);
        truth.alpha.push(a);
        truth.heading.push(psi);
        truth.position.push(p);
    }
    Ok(truth)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NoiseSpec {
    /// Ego-velocity noise, m/s per axis.
    pub sigma_r: f64,
    /// Fraction of detections replaced by gross outliers.
    pub outlier_fraction: f64,
    /// Range-rate noise of inlier detections, m/s.
    pub detection_range_rate_sigma: f64,
    pub rng_seed: u64,
}

impl Default for NoiseSpec {
    fn default() -> Self {
        Self {
            sigma_r: 0.1,
            outlier_fraction: 0.0,
            detection_range_rate_sigma: 0.01,
            rng_seed: 0,
        }
    }
}

impl NoiseSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.sigma_r >= 0.0 && self.sigma_r.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "sigma_r must be non-negative, got {}",
                self.sigma_r
            )));
        }
        if !(self.detection_range_rate_sigma >= 0.0 && self.detection_range_rate_sigma.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "detection_range_rate_sigma must be non-negative, got {}",
                self.detection_range_rate_sigma
            )));
        }
        if !(0.0..1.0).contains(&self.outlier_fraction) {
            return Err(Error::InvalidArgument(format!(
                "outlier_fraction must lie in [0, 1), got {}",
                self.outlier_fraction
            )));
        }
        Ok(())
    }
}

/// Paired ego-velocity measurements with `Σ = σ_r² I` on both radars.
pub fn simulate_pairs(truth: &GroundTruth, noise: &NoiseSpec) -> Result<Vec<MeasurementPair>> {
    noise.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(noise.rng_seed, PAIR_STREAM));
    let normal = Normal::new(0.0, noise.sigma_r).expect("validated sigma");
    let draw = |rng: &mut ChaCha8Rng| Vec2::new(normal.sample(rng), normal.sample(rng));
    Ok((0..truth.len())
        .map(|i| {
            let t = truth.times[i];
            let ha = truth.v_a[i] + draw(&mut rng);
            let hb = truth.velocity_b(i) + draw(&mut rng);
            MeasurementPair::new(
                t,
                EgoVelocityEstimate::isotropic(t, ha, noise.sigma_r),
                EgoVelocityEstimate::isotropic(t, hb, noise.sigma_r),
            )
        })
        .collect())
}

/// Field of view and range limits shared by both radars.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SensorModel {
    /// Half-width of the azimuth field of view about boresight, rad.
    pub fov_half_angle: f64,
    /// m
    pub max_range: f64,
    /// m
    pub min_range: f64,
}

impl Default for SensorModel {
    fn default() -> Self {
        Self {
            fov_half_angle: PI / 3.0,
            max_range: 40.0,
            min_range: 0.5,
        }
    }
}

/// Static landmarks scattered uniformly in annuli centred on points along
/// the trajectory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LandmarkField {
    pub inner_radius: f64,
    pub outer_radius: f64,
    /// Landmarks per annulus.
    pub per_anchor: usize,
    /// Time between annulus centres, seconds.
    pub anchor_spacing: f64,
}

impl Default for LandmarkField {
    fn default() -> Self {
        Self {
            inner_radius: 3.0,
            outer_radius: 25.0,
            per_anchor: 12,
            anchor_spacing: 0.5,
        }
    }
}

pub fn generate_landmarks(truth: &GroundTruth, field: &LandmarkField, seed: u64) -> Result<Vec<Vec2>> {
    if !(field.inner_radius >= 0.0 && field.outer_radius > field.inner_radius) {
        return Err(Error::InvalidArgument(format!(
            "landmark annulus [{}, {}] is empty",
            field.inner_radius, field.outer_radius
        )));
    }
    if !(field.anchor_spacing > 0.0) {
        return Err(Error::InvalidArgument("anchor_spacing must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, LANDMARK_STREAM));
    let r2 = Uniform::new(field.inner_radius.powi(2), field.outer_radius.powi(2))
        .map_err(|e| Error::InvalidArgument(e.to_string()))?;
    let mut out = Vec::new();
    let mut next = f64::NEG_INFINITY;
    for (t, p) in truth.times.iter().zip(&truth.position) {
        if *t < next {
            continue;
        }
        next = t + field.anchor_spacing;
        for _ in 0..field.per_anchor {
            let r = r2.sample(&mut rng).sqrt();
            let phi = rng.random_range(0.0..TAU);
            out.push(p + unit(phi) * r);
        }
    }
    Ok(out)
}

/// Scans of one radar together with outlier labels per detection.
#[derive(Debug, Clone, PartialEq)]
pub struct SimulatedStream {
    pub scans: Vec<RadarScan>,
    pub outliers: Vec<Vec<bool>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulatedScans {
    pub a: SimulatedStream,
    pub b: SimulatedStream,
}

pub const RADAR_A: &str = "a";
pub const RADAR_B: &str = "b";

/// Detection-level scans of both radars against a static landmark field.
///
/// A landmark is visible when it lies within the sensor's range limits and
/// within `±fov_half_angle` of boresight. Its range-rate is `-u · h` for the
/// unit direction `u` and the radar's body velocity `h`, plus Gaussian noise;
/// outliers get an extra offset of random sign and magnitude in `[0.5, 3]`
/// m/s. Scans with fewer than three visible landmarks are still emitted.
pub fn simulate_scans(
    truth: &GroundTruth,
    landmarks: &[Vec2],
    sensor: &SensorModel,
    noise: &NoiseSpec,
) -> Result<SimulatedScans> {
    noise.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(noise.rng_seed, SCAN_STREAM));
    let normal = Normal::new(0.0, noise.detection_range_rate_sigma).expect("validated sigma");
    let offset = Uniform::new_inclusive(0.5, 3.0).expect("static bounds");

    let mut streams = [
        SimulatedStream { scans: Vec::new(), outliers: Vec::new() },
        SimulatedStream { scans: Vec::new(), outliers: Vec::new() },
    ];
    for i in 0..truth.len() {
        let t = truth.times[i];
        let psi = truth.heading[i];
        let poses = [
            (truth.position[i], psi, truth.v_a[i], RADAR_A),
            (
                truth.position[i] + rotation(psi) * truth.translation,
                psi - truth.extrinsics.theta_ba,
                truth.velocity_b(i),
                RADAR_B,
            ),
        ];
        for ((pos, heading, vel, id), stream) in poses.into_iter().zip(streams.iter_mut()) {
            let to_body = rotation(heading).transpose();
            let mut detections = Vec::new();
            let mut labels = Vec::new();
            for lm in landmarks {
                let rel = to_body * (lm - pos);
                let range = rel.norm();
                if range < sensor.min_range || range > sensor.max_range {
                    continue;
                }
                let azimuth = rel.x.atan2(rel.y);
                if azimuth.abs() > sensor.fov_half_angle {
                    continue;
                }
                let mut rr = -(rel / range).dot(&vel) + normal.sample(&mut rng);
                let outlier = rng.random::<f64>() < noise.outlier_fraction;
                if outlier {
                    let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
                    rr += sign * offset.sample(&mut rng);
                }
                detections.push(Detection::new(range, azimuth, rr));
                labels.push(outlier);
            }
            stream.scans.push(RadarScan::new(t, id, detections));
            stream.outliers.push(labels);
        }
    }
    let [a, b] = streams;
    Ok(SimulatedScans { a, b })
}
