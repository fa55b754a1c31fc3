//! Forward kinematics, skinning and their derivatives.
//!
//! Every joint carries a rest-relative rigid transform `x -> A_j x + b_j`:
//! `A_j = A_p R_j`, `b_j = A_p (J_j - R_j J_j) + b_p` with `(A_p, b_p)` the
//! parent's transform (identity for the root). A vertex with rest position
//! `x` maps to `x + sum_j w_j ((A_j - I) x + b_j) + t`, which is the usual
//! weighted blend written so that the zero pose reproduces `x` bit-exactly.

use super::{rodrigues_with_derivatives, HandModel, HandPose, Result};
use crate::{Mat3, Vec3};

#[derive(Debug, Clone)]
pub struct LbsOutput {
    pub vertices: Vec<Vec3>,
    pub joints: Vec<Vec3>,
    /// Rest shape after pose blend and offsets, before skinning.
    pub rest_shape: Vec<Vec3>,
    pub joint_rotations: Vec<Mat3>,
    pub joint_translations: Vec<Vec3>,
    local: Vec<(Mat3, [Mat3; 3])>,
}

impl LbsOutput {
    /// Blended linear part `sum_j w_j A_j` for one vertex.
    pub fn blended_rotation(&self, model: &HandModel, v: usize) -> Mat3 {
        let j = model.joint_count();
        let row = &model.weights[v * j..(v + 1) * j];
        let mut m = Mat3::zeros();
        for (k, &w) in row.iter().enumerate() {
            if w != 0.0 {
                m += self.joint_rotations[k] * w;
            }
        }
        m
    }
}

fn rest_shape(model: &HandModel, pose: &HandPose, local: &[(Mat3, [Mat3; 3])]) -> Vec<Vec3> {
    let mut rest: Vec<Vec3> = model.mesh.vertices.iter().zip(&pose.offsets).map(|(t, o)| t + o).collect();
    if let Some(pb) = &model.pose_blend {
        let cols = 3 * model.vertex_count();
        for (j, (r, _)) in local.iter().enumerate().skip(1) {
            let f = r - Mat3::identity();
            for m in 0..9 {
                let coef = f[(m / 3, m % 3)];
                if coef == 0.0 {
                    continue;
                }
                let row = &pb[(9 * (j - 1) + m) * cols..(9 * (j - 1) + m + 1) * cols];
                for (x, chunk) in rest.iter_mut().zip(row.chunks(3)) {
                    *x += Vec3::new(chunk[0], chunk[1], chunk[2]) * coef;
                }
            }
        }
    }
    rest
}

pub fn lbs_forward(model: &HandModel, pose: &HandPose) -> Result<LbsOutput> {
    pose.check(model)?;
    let nj = model.joint_count();
    let local: Vec<(Mat3, [Mat3; 3])> = pose.theta.iter().map(rodrigues_with_derivatives).collect();
    let rest = rest_shape(model, pose, &local);

    let mut a = vec![Mat3::identity(); nj];
    let mut b = vec![Vec3::zeros(); nj];
    for &j in &model.order {
        let (ap, bp) = match model.parents[j] {
            Some(p) => (a[p], b[p]),
            None => (Mat3::identity(), Vec3::zeros()),
        };
        let r = local[j].0;
        let jr = model.joints_rest[j];
        a[j] = ap * r;
        b[j] = ap * (jr - r * jr) + bp;
    }
    let t = pose.root_translation;
    let joints = (0..nj).map(|j| a[j] * model.joints_rest[j] + b[j] + t).collect();
    let vertices = rest
        .iter()
        .enumerate()
        .map(|(v, x)| {
            let mut d = Vec3::zeros();
            for (k, &w) in model.weights[v * nj..(v + 1) * nj].iter().enumerate() {
                if w != 0.0 {
                    d += ((a[k] - Mat3::identity()) * x + b[k]) * w;
                }
            }
            x + d + t
        })
        .collect();
    Ok(LbsOutput { vertices, joints, rest_shape: rest, joint_rotations: a, joint_translations: b, local })
}

/// Dense derivatives of the posed vertices and joints.
///
/// Pose parameters are indexed `3 j + c` (joint `j`, axis-angle component
/// `c`). Derivatives with respect to the root translation are the identity
/// for every vertex and joint. The derivative of vertex `v` with respect to
/// its own offset is `offset_blocks[v]`; other offsets do not affect it.
#[derive(Debug, Clone)]
pub struct LbsJacobians {
    /// `[param][vertex]`
    pub vertices_theta: Vec<Vec<Vec3>>,
    /// `[param][joint]`
    pub joints_theta: Vec<Vec<Vec3>>,
    pub offset_blocks: Vec<Mat3>,
}

impl LbsJacobians {
    /// Derivatives of the keypoints (joints then fingertips), `[param][keypoint]`.
    pub fn keypoints_theta(&self, model: &HandModel) -> Vec<Vec<Vec3>> {
        self.joints_theta
            .iter()
            .zip(&self.vertices_theta)
            .map(|(j, v)| {
                let mut out = j.clone();
                out.extend(model.fingertips.iter().map(|&f| v[f]));
                out
            })
            .collect()
    }
}

pub fn lbs_jacobians(model: &HandModel, pose: &HandPose) -> Result<LbsJacobians> {
    let out = lbs_forward(model, pose)?;
    let (nj, nv) = (model.joint_count(), model.vertex_count());
    let (a, local) = (&out.joint_rotations, &out.local);
    let mut vertices_theta = Vec::with_capacity(3 * nj);
    let mut joints_theta = Vec::with_capacity(3 * nj);
    for k in 0..nj {
        for c in 0..3 {
            let mut da = vec![Mat3::zeros(); nj];
            let mut db = vec![Vec3::zeros(); nj];
            for &j in &model.order {
                let (ap, dap, dbp) = match model.parents[j] {
                    Some(p) => (a[p], da[p], db[p]),
                    None => (Mat3::identity(), Mat3::zeros(), Vec3::zeros()),
                };
                let (r, dr) = (&local[j].0, &local[j].1);
                let jr = model.joints_rest[j];
                da[j] = dap * r;
                db[j] = dap * (jr - r * jr) + dbp;
                if j == k {
                    da[j] += ap * dr[c];
                    db[j] -= ap * dr[c] * jr;
                }
            }
            joints_theta.push((0..nj).map(|j| da[j] * model.joints_rest[j] + db[j]).collect::<Vec<_>>());

            // Pose-blend shift of the rest shape for this parameter.
            let drest: Option<Vec<Vec3>> = match (&model.pose_blend, k) {
                (Some(pb), k) if k > 0 => {
                    let cols = 3 * nv;
                    let mut d = vec![Vec3::zeros(); nv];
                    let dr = local[k].1[c];
                    for m in 0..9 {
                        let coef = dr[(m / 3, m % 3)];
                        if coef == 0.0 {
                            continue;
                        }
                        let row = &pb[(9 * (k - 1) + m) * cols..(9 * (k - 1) + m + 1) * cols];
                        for (x, ch) in d.iter_mut().zip(row.chunks(3)) {
                            *x += Vec3::new(ch[0], ch[1], ch[2]) * coef;
                        }
                    }
                    Some(d)
                }
                _ => None,
            };
            let dv = (0..nv)
                .map(|v| {
                    let x = out.rest_shape[v];
                    let mut acc = Vec3::zeros();
                    for (j, &w) in model.weights[v * nj..(v + 1) * nj].iter().enumerate() {
                        if w != 0.0 {
                            acc += (da[j] * x + db[j]) * w;
                        }
                    }
                    if let Some(d) = &drest {
                        acc += out.blended_rotation(model, v) * d[v];
                    }
                    acc
                })
                .collect();
            vertices_theta.push(dv);
        }
    }
    let offset_blocks = (0..nv).map(|v| out.blended_rotation(model, v)).collect();
    Ok(LbsJacobians { vertices_theta, joints_theta, offset_blocks })
}

/// Gradients of a scalar with respect to pose, translation and offsets.
#[derive(Debug, Clone, PartialEq)]
pub struct LbsAdjoint {
    pub theta: Vec<Vec3>,
    pub translation: Vec3,
    pub offsets: Vec<Vec3>,
}

/// Vector-Jacobian product: pulls gradients on posed vertices and posed
/// joints back to the pose parameters. `out` must come from [`lbs_forward`]
/// with the same model and pose.
pub fn lbs_vjp(model: &HandModel, out: &LbsOutput, grad_vertices: &[Vec3], grad_joints: &[Vec3]) -> LbsAdjoint {
    let (nj, nv) = (model.joint_count(), model.vertex_count());
    let a = &out.joint_rotations;
    let mut abar = vec![Mat3::zeros(); nj];
    let mut bbar = vec![Vec3::zeros(); nj];
    let mut xbar = vec![Vec3::zeros(); nv];
    let mut translation = Vec3::zeros();
    for v in 0..nv {
        let g = grad_vertices[v];
        if g == Vec3::zeros() {
            continue;
        }
        translation += g;
        let x = out.rest_shape[v];
        // The identity part of the blend passes g straight to the rest shape.
        let mut xb = g;
        for (j, &w) in model.weights[v * nj..(v + 1) * nj].iter().enumerate() {
            if w != 0.0 {
                abar[j] += g * x.transpose() * w;
                bbar[j] += g * w;
                xb += (a[j] - Mat3::identity()).transpose() * g * w;
            }
        }
        xbar[v] = xb;
    }
    for (j, g) in grad_joints.iter().enumerate() {
        translation += g;
        abar[j] += g * model.joints_rest[j].transpose();
        bbar[j] += g;
    }

    let mut rbar = vec![Mat3::zeros(); nj];
    for &j in model.order.iter().rev() {
        let r = out.local[j].0;
        let jr = model.joints_rest[j];
        let ap = model.parents[j].map_or(Mat3::identity(), |p| a[p]);
        rbar[j] = ap.transpose() * (abar[j] - bbar[j] * jr.transpose());
        if let Some(p) = model.parents[j] {
            let (ab, bb) = (abar[j], bbar[j]);
            abar[p] += ab * r.transpose() + bb * (jr - r * jr).transpose();
            bbar[p] += bb;
        }
    }
    if let Some(pb) = &model.pose_blend {
        let cols = 3 * nv;
        for (k, rb) in rbar.iter_mut().enumerate().skip(1) {
            for m in 0..9 {
                let row = &pb[(9 * (k - 1) + m) * cols..(9 * (k - 1) + m + 1) * cols];
                let s: f64 = row.chunks(3).zip(&xbar).map(|(ch, xb)| ch[0] * xb.x + ch[1] * xb.y + ch[2] * xb.z).sum();
                rb[(m / 3, m % 3)] += s;
            }
        }
    }
    let theta = (0..nj)
        .map(|j| {
            let dr = &out.local[j].1;
            Vec3::new(rbar[j].dot(&dr[0]), rbar[j].dot(&dr[1]), rbar[j].dot(&dr[2]))
        })
        .collect();
    LbsAdjoint { theta, translation, offsets: xbar }
}
