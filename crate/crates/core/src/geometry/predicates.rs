//! Exact orientation and in-sphere tests with symbolic perturbation.
//!
//! Sign conventions used throughout the crate:
//! * `orient(a, b, c, d) > 0` iff `d` lies on the side of plane `abc` that
//!   `(b - a) x (c - a)` points to, i.e. `det(b - a, c - a, d - a) > 0`.
//! * `in_sphere(a, b, c, d, e) > 0` iff `e` is strictly inside the
//!   circumsphere of the positively oriented tetrahedron `abcd`.

use std::cmp::Ordering;

use robust::Coord3D;

use crate::Vec3;

fn coord(p: &Vec3) -> Coord3D<f64> {
    Coord3D { x: p.x, y: p.y, z: p.z }
}

pub(crate) fn orient(a: &Vec3, b: &Vec3, c: &Vec3, d: &Vec3) -> f64 {
    // robust::orient3d is positive when d lies *below* abc (Shewchuk's convention).
    -robust::orient3d(coord(a), coord(b), coord(c), coord(d))
}

pub(crate) fn in_sphere(a: &Vec3, b: &Vec3, c: &Vec3, d: &Vec3, e: &Vec3) -> f64 {
    -robust::insphere(coord(a), coord(b), coord(c), coord(d), coord(e))
}

fn lex(a: &Vec3, b: &Vec3) -> Ordering {
    a.x.total_cmp(&b.x).then(a.y.total_cmp(&b.y)).then(a.z.total_cmp(&b.z))
}

/// In-sphere sign with ties broken by symbolic perturbation.
///
/// Points are perturbed along the lifting direction by amounts ordered
/// lexicographically by coordinates (larger point, larger perturbation).
/// Returns `true` iff `e` is inside the perturbed circumsphere of the
/// positively oriented tetrahedron `t`. Never undecided for distinct points.
pub(crate) fn in_sphere_perturbed(t: [&Vec3; 4], e: &Vec3) -> bool {
    let s = in_sphere(t[0], t[1], t[2], t[3], e);
    if s != 0.0 {
        return s > 0.0;
    }
    // slot 4 is the query point
    let mut order = [0usize, 1, 2, 3, 4];
    let pt = |i: usize| if i == 4 { e } else { t[i] };
    order.sort_by(|&i, &j| lex(pt(i), pt(j)));
    for &slot in order.iter().rev().take(2) {
        let o = match slot {
            4 => return false,
            3 => orient(t[0], t[1], t[2], e),
            2 => orient(t[0], t[1], e, t[3]),
            1 => orient(t[0], e, t[2], t[3]),
            _ => orient(e, t[1], t[2], t[3]),
        };
        if o != 0.0 {
            return o > 0.0;
        }
    }
    // Unreachable for a non-degenerate tetrahedron and distinct points.
    false
}
