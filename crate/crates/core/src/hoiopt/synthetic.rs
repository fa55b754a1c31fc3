//! Procedural hand pressed into a sphere: a self-contained fitting scene.

use serde::{Deserialize, Serialize};

use super::{HoiParams, HoiScene, Result};
use crate::geometry::primitives::icosphere;
use crate::geometry::{alpha_shape, farthest_point_sample, PointCloud};
use crate::hand::{procedural_hand, ProceduralHand};
use crate::Vec3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SphereGrasp {
    pub radius: f64,
    pub subdivisions: u32,
    pub center: Vec3,
    pub concise_points: usize,
    pub alpha: f64,
    pub hand: ProceduralHand,
    /// Densify the hand template to at least this many vertices.
    pub hand_vertices: usize,
    /// Initial flexion applied to every finger joint.
    pub flexion: f64,
}

impl Default for SphereGrasp {
    fn default() -> Self {
        Self {
            radius: 0.05,
            subdivisions: 4,
            center: Vec3::new(0.07, 0.04, 0.01),
            concise_points: 2048,
            alpha: 0.1,
            hand: ProceduralHand::three_finger(),
            hand_vertices: 2000,
            flexion: 0.0,
        }
    }
}

impl SphereGrasp {
    pub fn build(&self) -> Result<HoiScene> {
        let sphere = icosphere(self.radius, self.subdivisions).map_vertices(|v| v + self.center);
        let cloud = PointCloud::new(sphere.vertices.clone())?;
        let n = self.concise_points.min(cloud.len());
        let ids = farthest_point_sample(&cloud, n, 0)?;
        let sample = PointCloud::new(ids.iter().map(|&i| cloud.points[i]).collect())?;
        let mut concise = alpha_shape(&sample, self.alpha)?;
        concise.source_indices = concise.source_indices.iter().map(|&i| ids[i]).collect();
        let mut model = procedural_hand(&self.hand)?;
        if self.hand_vertices > model.vertex_count() {
            model = model.upsampled(self.hand_vertices)?;
        }
        let mut init = HoiParams::new(&model);
        init.scale = 1.0;
        for row in init.pose.theta.iter_mut().skip(1) {
            row.z = self.flexion;
        }
        HoiScene::new(sphere.vertices, concise, model, init)
    }
}
