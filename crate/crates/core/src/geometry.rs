//! Planar rotation and skew primitives.
//!
//! Vectors and matrices are nalgebra `Vector2<f64>` / `Matrix2<f64>`. Matrices
//! are always written and serialized in row-major order (`[[m00, m01], [m10, m11]]`),
//! regardless of nalgebra's column-major storage.
//!
//! Angles are plain radians. Wrapping only happens at reporting and
//! initialization boundaries; the optimizer works on raw values.

use std::f64::consts::{PI, TAU};

use nalgebra::{Matrix2, Vector2};

use crate::error::{Error, Result};

pub type Vec2 = Vector2<f64>;
pub type Mat2 = Matrix2<f64>;

fn check_finite(name: &str, value: f64) -> Result<()> {
    if value.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("{name} must be finite, got {value}")))
    }
}

/// Rotation matrix `[[cos, -sin], [sin, cos]]`.
pub fn rot2(theta: f64) -> Result<Mat2> {
    check_finite("theta", theta)?;
    Ok(rotation(theta))
}

/// Skew matrix `[[0, -r], [r, 0]]`; `wedge(r) * v` is `r` times `v` turned 90° CCW.
pub fn wedge(r: f64) -> Result<Mat2> {
    check_finite("r", r)?;
    Ok(skew(r))
}

/// Maps an axis angle into `[0, π)`.
pub fn wrap_axis(theta: f64) -> Result<f64> {
    check_finite("theta", theta)?;
    Ok(axis_angle(theta))
}

/// Maps an angle into `(-π, π]`.
pub fn wrap_pi(theta: f64) -> Result<f64> {
    check_finite("theta", theta)?;
    Ok(signed_angle(theta))
}

// Unchecked variants used on hot paths where inputs are already validated.

#[inline]
pub(crate) fn rotation(theta: f64) -> Mat2 {
    let (s, c) = theta.sin_cos();
    Mat2::new(c, -s, s, c)
}

#[inline]
pub(crate) fn skew(r: f64) -> Mat2 {
    Mat2::new(0.0, -r, r, 0.0)
}

/// `v` rotated by +90°.
#[inline]
pub(crate) fn perp(v: &Vec2) -> Vec2 {
    Vec2::new(-v.y, v.x)
}

#[inline]
pub(crate) fn cross(a: &Vec2, b: &Vec2) -> f64 {
    a.x * b.y - a.y * b.x
}

#[inline]
pub(crate) fn unit(theta: f64) -> Vec2 {
    let (s, c) = theta.sin_cos();
    Vec2::new(c, s)
}

pub(crate) fn axis_angle(theta: f64) -> f64 {
    let w = theta.rem_euclid(PI);
    // rem_euclid can round up to exactly PI for tiny negative inputs
    if w >= PI {
        0.0
    } else {
        w
    }
}

pub(crate) fn signed_angle(theta: f64) -> f64 {
    let w = theta.rem_euclid(TAU);
    if w > PI {
        w - TAU
    } else {
        w
    }
}

/// Smallest signed difference `a - b` for angles with the given period.
pub(crate) fn periodic_diff(a: f64, b: f64, period: f64) -> f64 {
    let d = (a - b).rem_euclid(period);
    if d > period / 2.0 {
        d - period
    } else {
        d
    }
}

/// Median on a circle of the given period: the sample minimizing the summed
/// absolute wrapped deviation to all other samples.
pub(crate) fn circular_median(samples: &[f64], period: f64) -> Option<f64> {
    let n = samples.len();
    if n == 0 {
        return None;
    }
    let mut order: Vec<(f64, f64)> = samples.iter().map(|&x| (x.rem_euclid(period), x)).collect();
    order.sort_by(|a, b| a.0.total_cmp(&b.0));
    // sorted positions unrolled twice around the circle
    let z: Vec<f64> = order.iter().map(|o| o.0).chain(order.iter().map(|o| o.0 + period)).collect();
    let mut prefix = vec![0.0; 2 * n + 1];
    for (k, v) in z.iter().enumerate() {
        prefix[k + 1] = prefix[k] + v;
    }
    let half = period / 2.0;
    let mut best = (f64::INFINITY, 0);
    let mut r = 0;
    for i in 0..n {
        let c = z[i];
        r = r.max(i);
        while r < i + n && z[r] - c <= half {
            r += 1;
        }
        let ahead = prefix[r] - prefix[i] - (r - i) as f64 * c;
        let behind = (i + n - r) as f64 * (c + period) - (prefix[i + n] - prefix[r]);
        let spread = ahead + behind;
        if spread < best.0 {
            best = (spread, i);
        }
    }
    Some(order[best.1].1)
}

/// Plain median; averages the two central values for even lengths.
pub(crate) fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Some(if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    })
}

pub(crate) mod serde_vec2 {
    use super::Vec2;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(v: &Vec2, s: S) -> Result<S::Ok, S::Error> {
        [v.x, v.y].serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec2, D::Error> {
        let [x, y] = <[f64; 2]>::deserialize(d)?;
        Ok(Vec2::new(x, y))
    }
}

pub(crate) mod serde_vec2_list {
    use super::Vec2;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(v: &[Vec2], s: S) -> Result<S::Ok, S::Error> {
        v.iter().map(|v| [v.x, v.y]).collect::<Vec<_>>().serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<Vec2>, D::Error> {
        let raw = Vec::<[f64; 2]>::deserialize(d)?;
        Ok(raw.into_iter().map(|[x, y]| Vec2::new(x, y)).collect())
    }
}

pub(crate) mod serde_mat2 {
    use super::Mat2;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(m: &Mat2, s: S) -> Result<S::Ok, S::Error> {
        [[m[(0, 0)], m[(0, 1)]], [m[(1, 0)], m[(1, 1)]]].serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Mat2, D::Error> {
        let [[a, b], [c, e]] = <[[f64; 2]; 2]>::deserialize(d)?;
        Ok(Mat2::new(a, b, c, e))
    }
}
