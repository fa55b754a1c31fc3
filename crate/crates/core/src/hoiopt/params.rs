use serde::{Deserialize, Serialize};

use crate::hand::{HandModel, HandPose};
use crate::Vec3;

/// Default hand-to-object scale.
pub const DEFAULT_HAND_SCALE: f64 = 7.39;

/// Hand placement relative to a fixed object.
///
/// World hand positions are `scale * R(rotation) * lbs(pose) + translation`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HoiParams {
    /// Axis-angle rotation applied to the hand.
    pub rotation: Vec3,
    pub translation: Vec3,
    pub pose: HandPose,
    /// Fixed during optimization.
    pub scale: f64,
}

impl HoiParams {
    pub fn new(model: &HandModel) -> Self {
        Self {
            rotation: Vec3::zeros(),
            translation: Vec3::zeros(),
            pose: HandPose::zero(model),
            scale: DEFAULT_HAND_SCALE,
        }
    }

    /// Length of the packed vector: `r (3), t (3), theta (3 J)` and then
    /// `offsets (3 V)` when enabled.
    pub fn packed_len(&self, with_offsets: bool) -> usize {
        6 + 3 * self.pose.theta.len() + if with_offsets { 3 * self.pose.offsets.len() } else { 0 }
    }

    pub fn pack(&self, with_offsets: bool) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.packed_len(with_offsets));
        out.extend(self.rotation.iter());
        out.extend(self.translation.iter());
        for row in &self.pose.theta {
            out.extend(row.iter());
        }
        if with_offsets {
            for o in &self.pose.offsets {
                out.extend(o.iter());
            }
        }
        out
    }

    pub fn unpack(&mut self, packed: &[f64], with_offsets: bool) {
        assert_eq!(packed.len(), self.packed_len(with_offsets), "packed parameter length");
        let v = |i: usize| Vec3::new(packed[i], packed[i + 1], packed[i + 2]);
        self.rotation = v(0);
        self.translation = v(3);
        let nj = self.pose.theta.len();
        for j in 0..nj {
            self.pose.theta[j] = v(6 + 3 * j);
        }
        if with_offsets {
            for (i, o) in self.pose.offsets.iter_mut().enumerate() {
                *o = v(6 + 3 * nj + 3 * i);
            }
        }
    }
}

/// Gradient with the same layout as [`HoiParams`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamGrad {
    pub rotation: Vec3,
    pub translation: Vec3,
    pub theta: Vec<Vec3>,
    pub offsets: Vec<Vec3>,
}

impl ParamGrad {
    pub fn zeros(joints: usize, vertices: usize) -> Self {
        Self {
            rotation: Vec3::zeros(),
            translation: Vec3::zeros(),
            theta: vec![Vec3::zeros(); joints],
            offsets: vec![Vec3::zeros(); vertices],
        }
    }

    pub fn add_scaled(&mut self, other: &ParamGrad, w: f64) {
        self.rotation += other.rotation * w;
        self.translation += other.translation * w;
        for (a, b) in self.theta.iter_mut().zip(&other.theta) {
            *a += b * w;
        }
        for (a, b) in self.offsets.iter_mut().zip(&other.offsets) {
            *a += b * w;
        }
    }

    pub fn scaled(&self, w: f64) -> ParamGrad {
        let mut out = ParamGrad::zeros(self.theta.len(), self.offsets.len());
        out.add_scaled(self, w);
        out
    }

    /// Packed in the [`HoiParams::pack`] order.
    pub fn pack(&self, with_offsets: bool) -> Vec<f64> {
        let mut out: Vec<f64> = self.rotation.iter().chain(self.translation.iter()).copied().collect();
        for row in &self.theta {
            out.extend(row.iter());
        }
        if with_offsets {
            for o in &self.offsets {
                out.extend(o.iter());
            }
        }
        out
    }
}
