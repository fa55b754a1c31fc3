//! Procedural test hand: an ellipsoidal palm plus capped tube fingers.
//!
//! Units are metres. Fingers point along +x, the palm faces +y and positive
//! rotation about a joint's z axis curls a finger toward the palm.

use serde::{Deserialize, Serialize};

use super::{HandModel, Result};
use crate::geometry::primitives::icosphere;
use crate::geometry::TriMesh;
use crate::Vec3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Finger {
    /// Position of the first joint.
    pub base: Vec3,
    pub direction: Vec3,
    pub segment_lengths: Vec<f64>,
    pub radius: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProceduralHand {
    /// Listed thumb first; fingertip keypoints follow this order.
    pub fingers: Vec<Finger>,
    pub palm_center: Vec3,
    pub palm_half_extent: Vec3,
    pub palm_subdivisions: u32,
    pub rings_per_segment: usize,
    pub ring_sides: usize,
}

fn finger(base: [f64; 3], dir: [f64; 3], lengths: &[f64], radius: f64) -> Finger {
    Finger { base: Vec3::from(base), direction: Vec3::from(dir).normalize(), segment_lengths: lengths.to_vec(), radius }
}

impl ProceduralHand {
    /// Thumb, index and middle finger with two joints each: 7 joints, about
    /// 600 vertices.
    pub fn three_finger() -> Self {
        Self {
            fingers: vec![
                finger([0.03, 0.008, 0.035], [0.6, 0.25, 0.75], &[0.045, 0.04], 0.0095),
                finger([0.085, 0.0, 0.018], [1.0, 0.0, 0.0], &[0.05, 0.04], 0.0085),
                finger([0.088, 0.0, -0.003], [1.0, 0.0, 0.0], &[0.054, 0.044], 0.0085),
            ],
            palm_center: Vec3::new(0.045, 0.0, 0.005),
            palm_half_extent: Vec3::new(0.047, 0.013, 0.034),
            palm_subdivisions: 2,
            rings_per_segment: 7,
            ring_sides: 10,
        }
    }

    /// Five fingers with three joints each: 16 joints, 21 keypoints.
    pub fn five_finger() -> Self {
        Self {
            fingers: vec![
                finger([0.03, 0.008, 0.04], [0.6, 0.25, 0.75], &[0.035, 0.03, 0.025], 0.0095),
                finger([0.085, 0.0, 0.027], [1.0, 0.0, 0.0], &[0.042, 0.026, 0.021], 0.0085),
                finger([0.088, 0.0, 0.009], [1.0, 0.0, 0.0], &[0.046, 0.029, 0.023], 0.0085),
                finger([0.085, 0.0, -0.009], [1.0, 0.0, -0.05], &[0.043, 0.027, 0.022], 0.008),
                finger([0.078, 0.0, -0.026], [1.0, 0.0, -0.12], &[0.034, 0.021, 0.019], 0.007),
            ],
            palm_center: Vec3::new(0.045, 0.0, 0.0),
            palm_half_extent: Vec3::new(0.047, 0.013, 0.042),
            palm_subdivisions: 2,
            rings_per_segment: 4,
            ring_sides: 8,
        }
    }
}

fn smoothstep(t: f64) -> f64 {
    let t = t.clamp(0.0, 1.0);
    t * t * (3.0 - 2.0 * t)
}

/// Builds the skinned template. Joint 0 is the wrist at the origin; finger
/// `f` owns joints `1 + f * S .. 1 + (f + 1) * S` for `S` segments.
pub fn procedural_hand(spec: &ProceduralHand) -> Result<HandModel> {
    let mut vertices = Vec::new();
    let mut faces: Vec<[usize; 3]> = Vec::new();
    let mut weight_rows: Vec<Vec<(usize, f64)>> = Vec::new();
    let mut parents = vec![None];
    let mut joints = vec![Vec3::zeros()];
    let mut fingertips = Vec::new();

    let palm = icosphere(1.0, spec.palm_subdivisions);
    for v in &palm.vertices {
        vertices.push(spec.palm_center + v.component_mul(&spec.palm_half_extent));
        weight_rows.push(vec![(0, 1.0)]);
    }
    faces.extend(palm.faces.iter().copied());

    for f in &spec.fingers {
        let dir = f.direction.normalize();
        let first_joint = joints.len();
        let mut s_at = vec![0.0];
        for (k, len) in f.segment_lengths.iter().enumerate() {
            parents.push(Some(if k == 0 { 0 } else { first_joint + k - 1 }));
            joints.push(f.base + dir * s_at[k]);
            s_at.push(s_at[k] + len);
        }
        let total = *s_at.last().unwrap();
        let blend = 0.3 * f.segment_lengths.iter().copied().fold(f64::INFINITY, f64::min);
        let weights_at = |s: f64| -> Vec<(usize, f64)> {
            // Segment owning s, then blend with its parent near the segment start.
            let k = (0..f.segment_lengths.len()).rev().find(|&k| s >= s_at[k]).unwrap_or(0);
            let near_next = k + 1 < f.segment_lengths.len() && s > s_at[k + 1] - blend;
            let (parent, child, start) = if near_next {
                (first_joint + k, first_joint + k + 1, s_at[k + 1])
            } else if k == 0 {
                (0, first_joint, 0.0)
            } else {
                (first_joint + k - 1, first_joint + k, s_at[k])
            };
            let t = smoothstep((s - start + blend) / (2.0 * blend));
            vec![(parent, 1.0 - t), (child, t)]
        };

        let helper = if dir.y.abs() < 0.9 { Vec3::y() } else { Vec3::x() };
        let u = helper.cross(&dir).normalize();
        let w = dir.cross(&u);
        let tip_radius = 0.75 * f.radius;
        let n_rings = spec.rings_per_segment * f.segment_lengths.len() + 1;
        let last_s = total - 0.6 * tip_radius;
        let sides = spec.ring_sides;

        let base_apex = vertices.len();
        vertices.push(f.base - dir * f.radius);
        weight_rows.push(weights_at(-f.radius));
        let ring_start = vertices.len();
        for i in 0..n_rings {
            let s = last_s * i as f64 / (n_rings - 1) as f64;
            let r = f.radius + (tip_radius - f.radius) * (s / total);
            let r = if i + 1 == n_rings { 0.8 * r } else { r };
            for k in 0..sides {
                let phi = std::f64::consts::TAU * k as f64 / sides as f64;
                vertices.push(f.base + dir * s + (u * phi.cos() + w * phi.sin()) * r);
                weight_rows.push(weights_at(s));
            }
        }
        let tip = vertices.len();
        vertices.push(f.base + dir * total);
        weight_rows.push(weights_at(total));
        fingertips.push(tip);

        let ring = |i: usize, k: usize| ring_start + i * sides + k % sides;
        for k in 0..sides {
            faces.push([ring(0, k + 1), ring(0, k), base_apex]);
            for i in 0..n_rings - 1 {
                faces.push([ring(i, k), ring(i, k + 1), ring(i + 1, k + 1)]);
                faces.push([ring(i, k), ring(i + 1, k + 1), ring(i + 1, k)]);
            }
            faces.push([ring(n_rings - 1, k), ring(n_rings - 1, k + 1), tip]);
        }
    }

    let nj = joints.len();
    let mut weights = vec![0.0; vertices.len() * nj];
    for (v, row) in weight_rows.iter().enumerate() {
        for &(j, w) in row {
            weights[v * nj + j] += w;
        }
    }
    HandModel::new(TriMesh::new(vertices, faces)?, weights, parents, joints, fingertips, None)
}
