use serde::{Deserialize, Serialize};

use super::{HoiError, HoiParams, ParamGrad, Result};
use crate::geometry::{vertex_normals, ConciseMesh, KnnIndex, TriMesh};
use crate::hand::{keypoints, lbs_forward, lbs_vjp, rodrigues_with_derivatives, HandModel, LbsOutput};
use crate::{Mat3, Vec3};

/// Hand placed in the object frame, with everything needed to pull
/// gradients back to the parameters.
#[derive(Debug, Clone)]
pub struct ComposedHand {
    pub vertices: Vec<Vec3>,
    pub keypoints: Vec<Vec3>,
    pub normals: Vec<Vec3>,
    pub rotation: Mat3,
    rotation_derivatives: [Mat3; 3],
    scale: f64,
    lbs: LbsOutput,
    index: KnnIndex,
}

impl ComposedHand {
    pub fn index(&self) -> &KnnIndex {
        &self.index
    }

    pub fn lbs(&self) -> &LbsOutput {
        &self.lbs
    }

    /// Converts gradients on world hand vertices and world keypoints into
    /// parameter gradients. Offsets receive their gradient regardless of
    /// whether the caller optimizes them.
    pub fn pull_back(&self, model: &HandModel, grad_vertices: &[Vec3], grad_keypoints: &[Vec3]) -> ParamGrad {
        let (nj, nv) = (model.joint_count(), model.vertex_count());
        let mut out = ParamGrad::zeros(nj, nv);
        let rt = self.rotation.transpose() * self.scale;
        let mut lbs_gv = vec![Vec3::zeros(); nv];
        let mut lbs_gj = vec![Vec3::zeros(); nj];
        let add = |g: &Vec3, x: &Vec3, out: &mut ParamGrad| {
            out.translation += g;
            for c in 0..3 {
                out.rotation[c] += self.scale * g.dot(&(self.rotation_derivatives[c] * x));
            }
        };
        for (v, g) in grad_vertices.iter().enumerate() {
            if *g != Vec3::zeros() {
                add(g, &self.lbs.vertices[v], &mut out);
                lbs_gv[v] += rt * g;
            }
        }
        for (k, g) in grad_keypoints.iter().enumerate() {
            if *g == Vec3::zeros() {
                continue;
            }
            if k < nj {
                add(g, &self.lbs.joints[k], &mut out);
                lbs_gj[k] += rt * g;
            } else {
                let f = model.fingertips()[k - nj];
                add(g, &self.lbs.vertices[f], &mut out);
                lbs_gv[f] += rt * g;
            }
        }
        let adj = lbs_vjp(model, &self.lbs, &lbs_gv, &lbs_gj);
        out.theta = adj.theta;
        out.offsets = adj.offsets;
        out
    }
}

/// `scale * R * lbs + t` for vertices and keypoints; normals are the posed
/// mesh normals rotated by `R`.
pub fn compose_hand(params: &HoiParams, model: &HandModel) -> Result<ComposedHand> {
    if !(params.scale > 0.0) {
        return Err(HoiError::Config(format!("hand scale must be positive, got {}", params.scale)));
    }
    let lbs = lbs_forward(model, &params.pose)?;
    let (rotation, rotation_derivatives) = rodrigues_with_derivatives(&params.rotation);
    let place = |p: &Vec3| rotation * p * params.scale + params.translation;
    let vertices: Vec<Vec3> = lbs.vertices.iter().map(place).collect();
    let kp = keypoints(model, &lbs.vertices, &lbs.joints);
    let posed = TriMesh { vertices: lbs.vertices.clone(), faces: model.faces().to_vec() };
    let normals = vertex_normals(&posed).normals.iter().map(|n| rotation * n).collect();
    let index = KnnIndex::from_points(vertices.clone());
    Ok(ComposedHand {
        keypoints: kp.iter().map(place).collect(),
        vertices,
        normals,
        rotation,
        rotation_derivatives,
        scale: params.scale,
        lbs,
        index,
    })
}

/// An object vertex lying behind the nearest hand vertex's normal.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PenetrationPair {
    pub object: usize,
    pub hand: usize,
}

pub(crate) fn penetration_pairs(index: &KnnIndex, normals: &[Vec3], object: &[Vec3]) -> Vec<PenetrationPair> {
    let hand = index.points();
    let mut out = Vec::new();
    for (o, p) in object.iter().enumerate() {
        if let Some(nb) = index.nearest(p) {
            if normals[nb.index].dot(&(hand[nb.index] - p)) > 0.0 {
                out.push(PenetrationPair { object: o, hand: nb.index });
            }
        }
    }
    out
}

/// Object vertex `o` penetrates iff `n_h . (h - o) > 0` for its nearest hand
/// vertex `h`. Returns pairs in object order.
pub fn detect_penetration(hand_vertices: &[Vec3], hand_normals: &[Vec3], object: &[Vec3]) -> Vec<PenetrationPair> {
    let index = KnnIndex::from_points(hand_vertices.to_vec());
    penetration_pairs(&index, hand_normals, object)
}

/// Frozen object and a hand placed by [`HoiParams`].
#[derive(Debug, Clone)]
pub struct HoiScene {
    object: Vec<Vec3>,
    object_index: KnnIndex,
    pub concise: ConciseMesh,
    pub model: HandModel,
    pub init: HoiParams,
    pub params: HoiParams,
}

impl HoiScene {
    pub fn new(object: Vec<Vec3>, concise: ConciseMesh, model: HandModel, init: HoiParams) -> Result<Self> {
        if object.is_empty() {
            return Err(HoiError::Config("object has no vertices".into()));
        }
        if concise.vertices().is_empty() {
            return Err(HoiError::Config("concise mesh has no vertices".into()));
        }
        init.pose.check(&model)?;
        if !(init.scale > 0.0) {
            return Err(HoiError::Config(format!("hand scale must be positive, got {}", init.scale)));
        }
        let object_index = KnnIndex::from_points(object.clone());
        Ok(Self { object, object_index, concise, model, params: init.clone(), init })
    }

    /// Dense object vertices; never modified.
    pub fn object(&self) -> &[Vec3] {
        &self.object
    }

    pub fn object_index(&self) -> &KnnIndex {
        &self.object_index
    }

    pub fn compose(&self) -> Result<ComposedHand> {
        compose_hand(&self.params, &self.model)
    }

    pub fn penetration(&self, hand: &ComposedHand) -> Vec<PenetrationPair> {
        penetration_pairs(&hand.index, &hand.normals, &self.object)
    }
}

/// Frozen binary contact masks over object vertices and hand keypoints.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContactMasks {
    object: Vec<bool>,
    keypoints: Vec<bool>,
}

/// Keypoint mask size and fallback object mask size.
pub const CONTACT_TOP_K: usize = 5;

impl ContactMasks {
    pub fn from_indices(object_len: usize, object: &[usize], keypoint_len: usize, keypoints: &[usize]) -> Self {
        let mut o = vec![false; object_len];
        for &i in object {
            o[i] = true;
        }
        let mut k = vec![false; keypoint_len];
        for &i in keypoints {
            k[i] = true;
        }
        Self { object: o, keypoints: k }
    }

    pub fn object(&self) -> &[bool] {
        &self.object
    }

    pub fn keypoints(&self) -> &[bool] {
        &self.keypoints
    }

    pub fn object_indices(&self) -> Vec<usize> {
        (0..self.object.len()).filter(|&i| self.object[i]).collect()
    }

    pub fn keypoint_indices(&self) -> Vec<usize> {
        (0..self.keypoints.len()).filter(|&i| self.keypoints[i]).collect()
    }
}

fn smallest_k(dist: &[f64], k: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..dist.len()).collect();
    idx.sort_by(|&a, &b| dist[a].total_cmp(&dist[b]).then(a.cmp(&b)));
    idx.truncate(k);
    idx
}

/// Object mask: penetrating vertices, or the 5 vertices closest to the hand
/// when nothing penetrates. Keypoint mask: the 5 keypoints closest to the
/// object. Computed once from the scene's current parameters.
pub fn init_contact_masks(scene: &HoiScene) -> Result<ContactMasks> {
    let hand = scene.compose()?;
    let pen = scene.penetration(&hand);
    let object_idx: Vec<usize> = if pen.is_empty() {
        let d: Vec<f64> = scene.object.iter().map(|p| hand.index.nearest(p).map_or(f64::INFINITY, |n| n.distance)).collect();
        smallest_k(&d, CONTACT_TOP_K)
    } else {
        pen.iter().map(|p| p.object).collect()
    };
    let kd: Vec<f64> =
        hand.keypoints.iter().map(|k| scene.object_index.nearest(k).map_or(f64::INFINITY, |n| n.distance)).collect();
    let kp_idx = smallest_k(&kd, CONTACT_TOP_K);
    Ok(ContactMasks::from_indices(scene.object.len(), &object_idx, hand.keypoints.len(), &kp_idx))
}

/// Default contact threshold on the minimum hand-object vertex distance.
pub const DEFAULT_CONTACT_THRESHOLD: f64 = 0.005;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    /// Largest distance from a penetrating object vertex to its nearest hand vertex.
    pub max_penetration: f64,
    pub mean_penetration: f64,
    pub penetrating_vertices: usize,
    pub min_distance: f64,
    pub contact: bool,
}

pub fn metrics(scene: &HoiScene, contact_threshold: f64) -> Result<Metrics> {
    let hand = scene.compose()?;
    Ok(metrics_for(scene, &hand, contact_threshold))
}

pub(crate) fn metrics_for(scene: &HoiScene, hand: &ComposedHand, contact_threshold: f64) -> Metrics {
    let pen = scene.penetration(hand);
    let depths: Vec<f64> = pen.iter().map(|p| (hand.vertices[p.hand] - scene.object[p.object]).norm()).collect();
    let max_penetration = depths.iter().copied().fold(0.0, f64::max);
    let mean_penetration = if depths.is_empty() { 0.0 } else { depths.iter().sum::<f64>() / depths.len() as f64 };
    let min_distance = scene
        .object
        .iter()
        .filter_map(|p| hand.index.nearest(p))
        .map(|n| n.distance)
        .fold(f64::INFINITY, f64::min);
    Metrics {
        max_penetration,
        mean_penetration,
        penetrating_vertices: depths.len(),
        min_distance,
        contact: min_distance < contact_threshold,
    }
}

/// Fraction of scenes with the contact indicator set.
pub fn contact_ratio(all: &[Metrics]) -> f64 {
    if all.is_empty() {
        return 0.0;
    }
    all.iter().filter(|m| m.contact).count() as f64 / all.len() as f64
}
