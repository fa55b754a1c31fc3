use serde::{Deserialize, Serialize};

use super::scene::{penetration_pairs, ComposedHand};
use super::{ContactMasks, HoiError, HoiParams, HoiScene, LossWeights, ParamGrad, Result};
use crate::gaussmap::{build_stencil, laplacian_loss, LaplacianStencil, LaplacianWeights};
use crate::hand::HandModel;
use crate::Vec3;

/// One loss value and its gradient with respect to the parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct LossTerm {
    pub value: f64,
    pub grad: ParamGrad,
    /// Number of pairs or joints contributing.
    pub count: usize,
}

/// Gradients on world-space hand vertices and keypoints, before pull-back.
struct WorldTerm {
    value: f64,
    grad_vertices: Vec<Vec3>,
    grad_keypoints: Vec<Vec3>,
    count: usize,
}

impl WorldTerm {
    fn new(hand: &ComposedHand) -> Self {
        Self {
            value: 0.0,
            grad_vertices: vec![Vec3::zeros(); hand.vertices.len()],
            grad_keypoints: vec![Vec3::zeros(); hand.keypoints.len()],
            count: 0,
        }
    }

    fn into_term(self, scene: &HoiScene, hand: &ComposedHand) -> LossTerm {
        let grad = hand.pull_back(&scene.model, &self.grad_vertices, &self.grad_keypoints);
        LossTerm { value: self.value, grad, count: self.count }
    }
}

fn check_masks(scene: &HoiScene, hand: &ComposedHand, masks: &ContactMasks) -> Result<()> {
    if masks.object().len() != scene.object().len() || masks.keypoints().len() != hand.keypoints.len() {
        return Err(HoiError::Config(format!(
            "mask sizes {}/{} do not match scene {}/{}",
            masks.object().len(),
            masks.keypoints().len(),
            scene.object().len(),
            hand.keypoints.len()
        )));
    }
    Ok(())
}

fn pene_world(scene: &HoiScene, hand: &ComposedHand) -> WorldTerm {
    let mut t = WorldTerm::new(hand);
    for p in penetration_pairs(hand.index(), &hand.normals, scene.object()) {
        let d = hand.vertices[p.hand] - scene.object()[p.object];
        t.value += d.norm_squared();
        t.grad_vertices[p.hand] += 2.0 * d;
        t.count += 1;
    }
    t
}

fn oc_world(scene: &HoiScene, hand: &ComposedHand, masks: &ContactMasks) -> WorldTerm {
    let mut t = WorldTerm::new(hand);
    for o in masks.object_indices() {
        let p = scene.object()[o];
        if let Some(nb) = hand.index().nearest(&p) {
            let d = hand.vertices[nb.index] - p;
            t.value += d.norm_squared();
            t.grad_vertices[nb.index] += 2.0 * d;
            t.count += 1;
        }
    }
    t
}

fn pull_keypoints(scene: &HoiScene, hand: &ComposedHand, selected: impl Iterator<Item = usize>) -> WorldTerm {
    let mut t = WorldTerm::new(hand);
    for k in selected {
        let p = hand.keypoints[k];
        if let Some(nb) = scene.concise.nearest(&p) {
            let d = p - scene.concise.vertices()[nb.index];
            t.value += d.norm_squared();
            t.grad_keypoints[k] += 2.0 * d;
            t.count += 1;
        }
    }
    t
}

fn hc_world(scene: &HoiScene, hand: &ComposedHand, masks: &ContactMasks) -> WorldTerm {
    pull_keypoints(scene, hand, masks.keypoint_indices().into_iter())
}

fn repos_world(scene: &HoiScene, hand: &ComposedHand, masks: &ContactMasks) -> WorldTerm {
    let selected = (0..hand.keypoints.len()).filter(|&k| masks.keypoints()[k] || scene.concise.contains(&hand.keypoints[k]));
    pull_keypoints(scene, hand, selected)
}

/// Squared distances between penetrating object vertices and their nearest
/// hand vertices. The pair set is recomputed on every call.
pub fn loss_pene(scene: &HoiScene) -> Result<LossTerm> {
    let hand = scene.compose()?;
    Ok(pene_world(scene, &hand).into_term(scene, &hand))
}

/// Masked object vertices against their nearest hand vertices.
pub fn loss_oc(scene: &HoiScene, masks: &ContactMasks) -> Result<LossTerm> {
    let hand = scene.compose()?;
    check_masks(scene, &hand, masks)?;
    Ok(oc_world(scene, &hand, masks).into_term(scene, &hand))
}

/// Masked keypoints against their nearest concise-mesh vertices.
pub fn loss_hc(scene: &HoiScene, masks: &ContactMasks) -> Result<LossTerm> {
    let hand = scene.compose()?;
    check_masks(scene, &hand, masks)?;
    Ok(hc_world(scene, &hand, masks).into_term(scene, &hand))
}

/// Keypoints inside the concise mesh, together with the masked keypoints,
/// pulled to their nearest concise-mesh vertices. `count` is the number of
/// selected joints.
pub fn loss_repos(scene: &HoiScene, masks: &ContactMasks) -> Result<LossTerm> {
    let hand = scene.compose()?;
    check_masks(scene, &hand, masks)?;
    Ok(repos_world(scene, &hand, masks).into_term(scene, &hand))
}

/// `|t - t0|^2 + |r - r0|^2 + sum_j |w * (theta_j - theta0_j)|^2` with the
/// per-axis weights `w` applied elementwise.
pub fn loss_cons(params: &HoiParams, init: &HoiParams, pose_axes: &Vec3) -> LossTerm {
    let nj = params.pose.theta.len();
    let mut grad = ParamGrad::zeros(nj, params.pose.offsets.len());
    let dt = params.translation - init.translation;
    let dr = params.rotation - init.rotation;
    let mut value = dt.norm_squared() + dr.norm_squared();
    grad.translation = 2.0 * dt;
    grad.rotation = 2.0 * dr;
    let w2 = pose_axes.component_mul(pose_axes);
    for j in 0..nj {
        let d = params.pose.theta[j] - init.pose.theta[j];
        value += w2.dot(&d.component_mul(&d));
        grad.theta[j] = 2.0 * w2.component_mul(&d);
    }
    LossTerm { value, grad, count: 0 }
}

/// Laplacian smoothness on hand rest-shape offsets, used when offsets are
/// optimized alongside the pose.
#[derive(Debug, Clone)]
pub struct OffsetRegularizer {
    pub stencil: LaplacianStencil,
    pub weight: f64,
}

/// Default weight of the offset Laplacian.
pub const OFFSET_LAPLACIAN_WEIGHT: f64 = 1e5;

impl OffsetRegularizer {
    /// KNN stencil over the template vertices.
    pub fn new(model: &HandModel, weight: f64) -> Result<Self> {
        let stencil = build_stencil(&model.template().vertices, crate::gaussmap::DEFAULT_NEIGHBORS)?;
        Ok(Self { stencil, weight })
    }

    fn evaluate(&self, model: &HandModel, offsets: &[Vec3]) -> Result<(f64, Vec<Vec3>)> {
        let reference = &model.template().vertices;
        let positions: Vec<Vec3> = reference.iter().zip(offsets).map(|(v, o)| v + o).collect();
        let zeros = vec![Vec3::zeros(); positions.len()];
        let w = LaplacianWeights { position: self.weight, color: 0.0, scale: 0.0 };
        let l = laplacian_loss(&positions, reference, &zeros, &zeros, w, &self.stencil)?;
        Ok((l.value, l.grad_positions))
    }
}

/// Per-term values of one evaluation, unweighted, plus the weighted total.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub pene: f64,
    pub hc: f64,
    pub oc: f64,
    pub repos: f64,
    pub cons: f64,
    /// Zero unless offsets are optimized.
    pub offsets: f64,
    pub total: f64,
    pub penetrating: usize,
    pub repos_joints: usize,
}

#[derive(Debug, Clone)]
pub struct TotalLoss {
    pub breakdown: LossBreakdown,
    pub grad: ParamGrad,
    /// Gradient in [`HoiParams::pack`] order, with offsets when a
    /// regularizer was supplied.
    pub packed: Vec<f64>,
}

impl TotalLoss {
    pub fn value(&self) -> f64 {
        self.breakdown.total
    }
}

/// Weighted sum of all terms with one gradient pull-back. Passing an
/// [`OffsetRegularizer`] adds its term and includes offsets in the packed
/// gradient.
pub fn total_loss(
    scene: &HoiScene,
    masks: &ContactMasks,
    weights: &LossWeights,
    offsets: Option<&OffsetRegularizer>,
) -> Result<TotalLoss> {
    let hand = scene.compose()?;
    total_loss_for(scene, &hand, masks, weights, offsets)
}

pub(crate) fn total_loss_for(
    scene: &HoiScene,
    hand: &ComposedHand,
    masks: &ContactMasks,
    weights: &LossWeights,
    offsets: Option<&OffsetRegularizer>,
) -> Result<TotalLoss> {
    check_masks(scene, hand, masks)?;
    let pene = pene_world(scene, hand);
    let oc = oc_world(scene, hand, masks);
    let hc = hc_world(scene, hand, masks);
    let repos = repos_world(scene, hand, masks);
    let cons = loss_cons(&scene.params, &scene.init, &weights.pose_axes);

    let mut gv = vec![Vec3::zeros(); hand.vertices.len()];
    for (g, (a, b)) in gv.iter_mut().zip(pene.grad_vertices.iter().zip(&oc.grad_vertices)) {
        *g = a * weights.pene + b * weights.oc;
    }
    let mut gk = vec![Vec3::zeros(); hand.keypoints.len()];
    for (g, (a, b)) in gk.iter_mut().zip(hc.grad_keypoints.iter().zip(&repos.grad_keypoints)) {
        *g = a * weights.hc + b * weights.repos;
    }
    let mut grad = hand.pull_back(&scene.model, &gv, &gk);
    grad.add_scaled(&cons.grad, weights.cons);

    let mut b = LossBreakdown {
        pene: pene.value,
        hc: hc.value,
        oc: oc.value,
        repos: repos.value,
        cons: cons.value,
        offsets: 0.0,
        total: 0.0,
        penetrating: pene.count,
        repos_joints: repos.count,
    };
    b.total = weights.pene * b.pene + weights.hc * b.hc + weights.oc * b.oc + weights.repos * b.repos + weights.cons * b.cons;
    if let Some(reg) = offsets {
        let (value, g) = reg.evaluate(&scene.model, &scene.params.pose.offsets)?;
        b.offsets = value;
        b.total += value;
        for (a, d) in grad.offsets.iter_mut().zip(&g) {
            *a += d;
        }
    }
    let packed = grad.pack(offsets.is_some());
    Ok(TotalLoss { breakdown: b, grad, packed })
}
