use std::collections::VecDeque;

use crate::calib::MeasurementPair;
use crate::ego_velocity::EgoVelocityEstimate;
use crate::error::{Error, Result};

/// Pairs radar-b estimates with radar-a timestamps as data arrives.
///
/// Each radar-a estimate is matched with the radar-b estimates bracketing its
/// timestamp; the velocity is interpolated linearly and the covariance of the
/// endpoint with the larger trace is kept. Brackets wider than `max_gap` and
/// radar-a estimates outside the span of stream b are dropped. The output
/// does not depend on how the input is split into batches.
#[derive(Debug, Clone)]
pub struct Synchronizer {
    max_gap: f64,
    pending: VecDeque<EgoVelocityEstimate>,
    b: VecDeque<EgoVelocityEstimate>,
    last_a: Option<f64>,
    last_b: Option<f64>,
}

fn check_order(last: &mut Option<f64>, t: f64, stream: &str) -> Result<()> {
    if !t.is_finite() {
        return Err(Error::InvalidArgument(format!("non-finite timestamp in stream {stream}")));
    }
    if let Some(prev) = *last {
        if t <= prev {
            return Err(Error::InvalidArgument(format!(
                "stream {stream} is not strictly increasing: {t} after {prev}"
            )));
        }
    }
    *last = Some(t);
    Ok(())
}

fn interpolate(b0: &EgoVelocityEstimate, b1: &EgoVelocityEstimate, t: f64) -> EgoVelocityEstimate {
    let w = (t - b0.timestamp) / (b1.timestamp - b0.timestamp);
    let wider = if b1.covariance.trace() > b0.covariance.trace() { b1 } else { b0 };
    EgoVelocityEstimate {
        velocity: b0.velocity * (1.0 - w) + b1.velocity * w,
        covariance: wider.covariance,
        n_inliers: b0.n_inliers.min(b1.n_inliers),
        n_total: b0.n_total.min(b1.n_total),
        timestamp: t,
    }
}

impl Synchronizer {
    pub fn new(max_gap: f64) -> Result<Self> {
        if !(max_gap >= 0.0) {
            return Err(Error::InvalidArgument(format!("max_gap must be non-negative, got {max_gap}")));
        }
        Ok(Self {
            max_gap,
            pending: VecDeque::new(),
            b: VecDeque::new(),
            last_a: None,
            last_b: None,
        })
    }

    pub fn push_a(&mut self, est: EgoVelocityEstimate) -> Result<()> {
        check_order(&mut self.last_a, est.timestamp, "a")?;
        self.pending.push_back(est);
        Ok(())
    }

    pub fn push_b(&mut self, est: EgoVelocityEstimate) -> Result<()> {
        check_order(&mut self.last_b, est.timestamp, "b")?;
        self.b.push_back(est);
        Ok(())
    }

    /// Emits every pair that later input can no longer change.
    pub fn drain(&mut self) -> Vec<MeasurementPair> {
        self.resolve(false)
    }

    /// Emits the remaining pairs; radar-a estimates still waiting for a
    /// bracket are dropped.
    pub fn finish(mut self) -> Vec<MeasurementPair> {
        self.resolve(true)
    }

    fn resolve(&mut self, finished: bool) -> Vec<MeasurementPair> {
        let mut out = Vec::new();
        while let Some(a) = self.pending.front().copied() {
            let t = a.timestamp;
            while self.b.len() >= 2 && self.b[1].timestamp <= t {
                self.b.pop_front();
            }
            let Some(b0) = self.b.front().copied() else {
                if finished {
                    self.pending.pop_front();
                    continue;
                }
                break;
            };
            if b0.timestamp > t {
                self.pending.pop_front();
                continue;
            }
            if b0.timestamp == t {
                out.push(MeasurementPair::new(t, a, b0));
                self.pending.pop_front();
                continue;
            }
            match self.b.get(1) {
                Some(b1) => {
                    if b1.timestamp - b0.timestamp <= self.max_gap {
                        out.push(MeasurementPair::new(t, a, interpolate(&b0, b1, t)));
                    }
                    self.pending.pop_front();
                }
                None if finished => {
                    self.pending.pop_front();
                }
                None => break,
            }
        }
        out
    }
}

/// Pairs two sorted estimate streams on radar a's clock.
pub fn synchronize(
    stream_a: &[EgoVelocityEstimate],
    stream_b: &[EgoVelocityEstimate],
    max_gap: f64,
) -> Result<Vec<MeasurementPair>> {
    if stream_a.is_empty() || stream_b.is_empty() {
        log::warn!(
            "synchronizing with an empty stream ({} a, {} b estimates)",
            stream_a.len(),
            stream_b.len()
        );
    }
    let mut sync = Synchronizer::new(max_gap)?;
    for e in stream_a {
        sync.push_a(*e)?;
    }
    for e in stream_b {
        sync.push_b(*e)?;
    }
    Ok(sync.finish())
}

/// Whether both radars move at least `min_speed`.
pub fn is_moving(pair: &MeasurementPair, min_speed: f64) -> bool {
    pair.h_a.velocity.norm() >= min_speed && pair.h_b.velocity.norm() >= min_speed
}

/// Keeps pairs where both radars move at least `min_speed`.
pub fn filter_pairs(pairs: &[MeasurementPair], min_speed: f64) -> Vec<MeasurementPair> {
    pairs.iter().filter(|p| is_moving(p, min_speed)).copied().collect()
}
