//! Linear-blend-skinned parametric hand.
//!
//! The model file is JSON:
//!
//! ```json
//! {
//!   "vertices": [[x, y, z], ...],
//!   "faces": [[i, j, k], ...],
//!   "weights": [[w_0, ..., w_{J-1}], ...],
//!   "parents": [-1, 0, 1, ...],
//!   "joints_rest": [[x, y, z], ...],
//!   "fingertips": [thumb, index, middle, ring, pinky],
//!   "pose_blend": [[...3V entries...], ...]
//! }
//! ```
//!
//! `weights` has one row per vertex and one column per joint; every row must
//! sum to 1. `pose_blend` is optional and, when present, has `9 (J - 1)` rows
//! of `3 V` entries: row `9 (j - 1) + 3 r + c` scales entry `(r, c)` of
//! `R_j - I` for articulation joint `j`. Fingertip ids are listed thumb
//! first. For a MANO-converted file (778 vertices) the usual choice is
//! `[745, 317, 444, 556, 673]`.

mod lbs;
mod procedural;
mod rotation;

pub use lbs::{lbs_forward, lbs_jacobians, lbs_vjp, LbsAdjoint, LbsJacobians, LbsOutput};
pub use procedural::{procedural_hand, Finger, ProceduralHand};
pub use rotation::{rodrigues, rodrigues_with_derivatives, skew};

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{upsample_to_target, GeometryError, TriMesh};
use crate::Vec3;

#[derive(Debug, Error)]
pub enum HandError {
    #[error("hand model schema: {0}")]
    Schema(String),
    #[error("skinning weights of vertex {vertex} sum to {sum}, expected 1")]
    WeightRow { vertex: usize, sum: f64 },
    #[error("joint parents do not form a tree rooted at joint 0: {0}")]
    Parents(String),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = HandError> = std::result::Result<T, E>;

/// Clamp range for the global (root) rotation components. Deliberately
/// 3.14, not pi.
#[allow(clippy::approx_constant)]
pub const ROOT_POSE_RANGE: (f64, f64) = (-3.14, 3.14);
/// Clamp range for articulation rotation components.
pub const JOINT_POSE_RANGE: (f64, f64) = (-0.6, 1.65);

#[derive(Serialize, Deserialize)]
struct HandModelFile {
    vertices: Vec<[f64; 3]>,
    faces: Vec<[usize; 3]>,
    weights: Vec<Vec<f64>>,
    parents: Vec<i64>,
    joints_rest: Vec<[f64; 3]>,
    fingertips: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pose_blend: Option<Vec<Vec<f64>>>,
}

/// Immutable skinning template.
#[derive(Debug, Clone, PartialEq)]
pub struct HandModel {
    pub(crate) mesh: TriMesh,
    /// Row-major `V x J`.
    pub(crate) weights: Vec<f64>,
    pub(crate) parents: Vec<Option<usize>>,
    pub(crate) joints_rest: Vec<Vec3>,
    pub(crate) fingertips: Vec<usize>,
    /// Row-major `9 (J - 1) x 3 V`.
    pub(crate) pose_blend: Option<Vec<f64>>,
    /// Joints ordered so every parent precedes its children.
    pub(crate) order: Vec<usize>,
}

impl HandModel {
    pub fn new(
        mesh: TriMesh,
        weights: Vec<f64>,
        parents: Vec<Option<usize>>,
        joints_rest: Vec<Vec3>,
        fingertips: Vec<usize>,
        pose_blend: Option<Vec<f64>>,
    ) -> Result<Self> {
        mesh.validate()?;
        let (v, j) = (mesh.vertex_count(), parents.len());
        if j == 0 {
            return Err(HandError::Schema("model has no joints".into()));
        }
        if joints_rest.len() != j {
            return Err(HandError::Schema(format!("{} rest joints for {j} parents", joints_rest.len())));
        }
        if weights.len() != v * j {
            return Err(HandError::Schema(format!("weights hold {} entries, expected {v} x {j}", weights.len())));
        }
        for (i, row) in weights.chunks(j).enumerate() {
            let sum: f64 = row.iter().sum();
            if row.iter().any(|w| !w.is_finite() || *w < 0.0) || (sum - 1.0).abs() > 1e-6 {
                return Err(HandError::WeightRow { vertex: i, sum });
            }
        }
        if let Some(&bad) = fingertips.iter().find(|&&f| f >= v) {
            return Err(HandError::Schema(format!("fingertip vertex {bad} out of range")));
        }
        if let Some(pb) = &pose_blend {
            if pb.len() != 9 * (j - 1) * 3 * v {
                return Err(HandError::Schema(format!(
                    "pose blend holds {} entries, expected {} x {}",
                    pb.len(),
                    9 * (j - 1),
                    3 * v
                )));
            }
        }
        let order = topological_order(&parents)?;
        Ok(Self { mesh, weights, parents, joints_rest, fingertips, pose_blend, order })
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let f: HandModelFile = serde_json::from_str(text)?;
        let j = f.parents.len();
        if let Some((i, row)) = f.weights.iter().enumerate().find(|(_, r)| r.len() != j) {
            return Err(HandError::Schema(format!("weight row {i} has {} entries, expected {j}", row.len())));
        }
        let parents = f
            .parents
            .iter()
            .map(|&p| match p {
                -1 => Ok(None),
                p if p >= 0 && (p as usize) < j => Ok(Some(p as usize)),
                p => Err(HandError::Parents(format!("parent index {p} out of range"))),
            })
            .collect::<Result<Vec<_>>>()?;
        let pose_blend = f.pose_blend.map(|rows| rows.concat());
        Self::new(
            TriMesh::new(f.vertices.iter().map(|p| Vec3::from(*p)).collect(), f.faces)?,
            f.weights.concat(),
            parents,
            f.joints_rest.iter().map(|p| Vec3::from(*p)).collect(),
            f.fingertips,
            pose_blend,
        )
    }

    pub fn to_json(&self) -> Result<String> {
        let j = self.joint_count();
        let f = HandModelFile {
            vertices: self.mesh.vertices.iter().map(|p| [p.x, p.y, p.z]).collect(),
            faces: self.mesh.faces.clone(),
            weights: self.weights.chunks(j).map(|r| r.to_vec()).collect(),
            parents: self.parents.iter().map(|p| p.map_or(-1, |p| p as i64)).collect(),
            joints_rest: self.joints_rest.iter().map(|p| [p.x, p.y, p.z]).collect(),
            fingertips: self.fingertips.clone(),
            pose_blend: self.pose_blend.as_ref().map(|pb| pb.chunks(3 * self.vertex_count()).map(|r| r.to_vec()).collect()),
        };
        Ok(serde_json::to_string(&f)?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&fs::read_to_string(path)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn vertex_count(&self) -> usize {
        self.mesh.vertex_count()
    }

    pub fn joint_count(&self) -> usize {
        self.parents.len()
    }

    /// Skeleton joints plus fingertip vertices.
    pub fn keypoint_count(&self) -> usize {
        self.joint_count() + self.fingertips.len()
    }

    pub fn template(&self) -> &TriMesh {
        &self.mesh
    }

    pub fn faces(&self) -> &[[usize; 3]] {
        &self.mesh.faces
    }

    pub fn weight(&self, vertex: usize, joint: usize) -> f64 {
        self.weights[vertex * self.joint_count() + joint]
    }

    pub fn parents(&self) -> &[Option<usize>] {
        &self.parents
    }

    pub fn joints_rest(&self) -> &[Vec3] {
        &self.joints_rest
    }

    pub fn fingertips(&self) -> &[usize] {
        &self.fingertips
    }

    pub fn has_pose_blend(&self) -> bool {
        self.pose_blend.is_some()
    }

    /// Densifies the template by longest-edge midpoint splitting. New
    /// vertices interpolate skinning weights and pose-blend columns; existing
    /// vertex ids (and so fingertips) are unchanged.
    pub fn upsampled(&self, target: usize) -> Result<Self> {
        let up = upsample_to_target(&self.mesh, target)?;
        let j = self.joint_count();
        let mut weights = self.weights.clone();
        for p in &up.parents {
            for k in 0..j {
                let w = (1.0 - p.weight) * weights[p.a * j + k] + p.weight * weights[p.b * j + k];
                weights.push(w);
            }
        }
        let pose_blend = self.pose_blend.as_ref().map(|pb| {
            let v_old = self.vertex_count();
            let v_new = up.mesh.vertex_count();
            let mut out = Vec::with_capacity(9 * (j - 1) * 3 * v_new);
            for row in pb.chunks(3 * v_old) {
                let mut r = row.to_vec();
                for p in &up.parents {
                    for d in 0..3 {
                        r.push((1.0 - p.weight) * r[3 * p.a + d] + p.weight * r[3 * p.b + d]);
                    }
                }
                out.extend(r);
            }
            out
        });
        Self::new(up.mesh, weights, self.parents.clone(), self.joints_rest.clone(), self.fingertips.clone(), pose_blend)
    }
}

fn topological_order(parents: &[Option<usize>]) -> Result<Vec<usize>> {
    let j = parents.len();
    if parents[0].is_some() {
        return Err(HandError::Parents("joint 0 must be the root".into()));
    }
    if let Some(i) = (1..j).find(|&i| parents[i].is_none()) {
        return Err(HandError::Parents(format!("joint {i} has no parent")));
    }
    let mut children = vec![Vec::new(); j];
    for (i, p) in parents.iter().enumerate() {
        if let Some(p) = p {
            children[*p].push(i);
        }
    }
    let mut order = vec![0];
    let mut k = 0;
    while k < order.len() {
        order.extend(children[order[k]].iter().copied());
        k += 1;
    }
    if order.len() != j {
        return Err(HandError::Parents("cycle among non-root joints".into()));
    }
    Ok(order)
}

/// Axis-angle pose, root translation and per-vertex rest-shape offsets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HandPose {
    /// One axis-angle row per joint; row 0 rotates the whole hand.
    pub theta: Vec<Vec3>,
    pub root_translation: Vec3,
    pub offsets: Vec<Vec3>,
}

impl HandPose {
    pub fn zero(model: &HandModel) -> Self {
        Self {
            theta: vec![Vec3::zeros(); model.joint_count()],
            root_translation: Vec3::zeros(),
            offsets: vec![Vec3::zeros(); model.vertex_count()],
        }
    }

    pub fn check(&self, model: &HandModel) -> Result<()> {
        if self.theta.len() != model.joint_count() {
            return Err(HandError::Dimension(format!("{} pose rows for {} joints", self.theta.len(), model.joint_count())));
        }
        if self.offsets.len() != model.vertex_count() {
            return Err(HandError::Dimension(format!(
                "{} offsets for {} vertices",
                self.offsets.len(),
                model.vertex_count()
            )));
        }
        Ok(())
    }
}

/// Componentwise projection of the pose onto the allowed ranges.
pub fn clamp_pose(pose: &HandPose) -> HandPose {
    let mut out = pose.clone();
    clamp_theta(&mut out.theta);
    out
}

pub(crate) fn clamp_theta(theta: &mut [Vec3]) {
    for (j, row) in theta.iter_mut().enumerate() {
        let (lo, hi) = if j == 0 { ROOT_POSE_RANGE } else { JOINT_POSE_RANGE };
        for c in row.iter_mut() {
            *c = c.clamp(lo, hi);
        }
    }
}

/// Posed joints followed by the posed fingertip vertices.
pub fn keypoints(model: &HandModel, vertices: &[Vec3], joints: &[Vec3]) -> Vec<Vec3> {
    let mut out = joints.to_vec();
    out.extend(model.fingertips.iter().map(|&i| vertices[i]));
    out
}
