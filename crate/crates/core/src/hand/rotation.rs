//! Axis-angle rotations and their derivatives.

use crate::{Mat3, Vec3};

/// Below this angle the Rodrigues coefficients switch to their Taylor series.
const TAYLOR_BELOW: f64 = 1e-2;

pub fn skew(v: &Vec3) -> Mat3 {
    Mat3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

/// Coefficients of `R = I + a K + b K^2` (with `K = [v]x`) and of their
/// derivatives divided by the angle: `c = a'/t`, `d = b'/t`.
fn coefficients(t: f64) -> (f64, f64, f64, f64) {
    if t < TAYLOR_BELOW {
        let t2 = t * t;
        let t4 = t2 * t2;
        (
            1.0 - t2 / 6.0 + t4 / 120.0,
            0.5 - t2 / 24.0 + t4 / 720.0,
            -1.0 / 3.0 + t2 / 30.0 - t4 / 840.0,
            -1.0 / 12.0 + t2 / 180.0 - t4 / 6720.0,
        )
    } else {
        let (s, c) = t.sin_cos();
        let t2 = t * t;
        (s / t, (1.0 - c) / t2, (t * c - s) / (t2 * t), (t * s - 2.0 * (1.0 - c)) / (t2 * t2))
    }
}

/// Rotation matrix of an axis-angle vector.
pub fn rodrigues(v: &Vec3) -> Mat3 {
    let (a, b, _, _) = coefficients(v.norm());
    let k = skew(v);
    Mat3::identity() + k * a + k * k * b
}

/// Rotation matrix and its partial derivatives with respect to `v.x`, `v.y`, `v.z`.
pub fn rodrigues_with_derivatives(v: &Vec3) -> (Mat3, [Mat3; 3]) {
    let (a, b, c, d) = coefficients(v.norm());
    let k = skew(v);
    let k2 = k * k;
    let r = Mat3::identity() + k * a + k2 * b;
    let dr = std::array::from_fn(|i| {
        let e = skew(&Vec3::ith(i, 1.0));
        e * a + (e * k + k * e) * b + k * (c * v[i]) + k2 * (d * v[i])
    });
    (r, dr)
}
