use serde::{Deserialize, Serialize};

use super::losses::{total_loss_for, OffsetRegularizer, OFFSET_LAPLACIAN_WEIGHT};
use super::scene::metrics_for;
use super::{ContactMasks, HoiError, HoiParams, HoiScene, LossBreakdown, LossWeights, Metrics, ParamGrad, Result};
use crate::hand::clamp_theta;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub first_moment: Vec<f64>,
    pub second_moment: Vec<f64>,
    pub step: u64,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamState {
    pub fn new(len: usize, lr: f64) -> Self {
        Self {
            first_moment: vec![0.0; len],
            second_moment: vec![0.0; len],
            step: 0,
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }

    /// One bias-corrected Adam update of `x` in place.
    pub fn update(&mut self, x: &mut [f64], grad: &[f64]) {
        assert_eq!(x.len(), self.first_moment.len(), "parameter length");
        assert_eq!(grad.len(), self.first_moment.len(), "gradient length");
        self.step += 1;
        let c1 = 1.0 - self.beta1.powi(self.step as i32);
        let c2 = 1.0 - self.beta2.powi(self.step as i32);
        for i in 0..x.len() {
            let g = grad[i];
            self.first_moment[i] = self.beta1 * self.first_moment[i] + (1.0 - self.beta1) * g;
            self.second_moment[i] = self.beta2 * self.second_moment[i] + (1.0 - self.beta2) * g * g;
            let m = self.first_moment[i] / c1;
            let v = self.second_moment[i] / c2;
            x[i] -= self.lr * m / (v.sqrt() + self.eps);
        }
    }
}

/// Adam on `(r, t, theta)` followed by projection of the pose rows onto
/// their ranges. Offsets are left alone.
pub fn adam_step(state: &mut AdamState, params: &mut HoiParams, grad: &ParamGrad) {
    let mut x = params.pack(false);
    state.update(&mut x, &grad.pack(false));
    params.unpack(&x, false);
    clamp_theta(&mut params.pose.theta);
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OptimizeOptions {
    pub iterations: usize,
    pub lr: f64,
    /// Keep a per-iteration loss breakdown.
    pub trace: bool,
    pub optimize_offsets: bool,
    pub offsets_lr: f64,
    pub offsets_laplacian: f64,
    pub contact_threshold: f64,
}

impl Default for OptimizeOptions {
    fn default() -> Self {
        Self {
            iterations: 1000,
            lr: 0.01,
            trace: true,
            optimize_offsets: false,
            offsets_lr: 1.6e-5,
            offsets_laplacian: OFFSET_LAPLACIAN_WEIGHT,
            contact_threshold: super::DEFAULT_CONTACT_THRESHOLD,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizeResult {
    pub params: HoiParams,
    pub trace: Vec<LossBreakdown>,
    pub initial_metrics: Metrics,
    pub metrics: Metrics,
}

/// Runs the fitting loop from `scene.params` with frozen `masks`, leaving the
/// final parameters in the scene. Each iteration recomputes correspondences,
/// evaluates the total loss and takes one Adam step.
pub fn optimize(
    scene: &mut HoiScene,
    masks: &ContactMasks,
    weights: &LossWeights,
    options: &OptimizeOptions,
) -> Result<OptimizeResult> {
    weights.validate()?;
    if !(options.lr > 0.0 && options.offsets_lr > 0.0) {
        return Err(HoiError::Config("learning rates must be positive".into()));
    }
    let reg = if options.optimize_offsets {
        Some(OffsetRegularizer::new(&scene.model, options.offsets_laplacian)?)
    } else {
        None
    };
    let mut adam = AdamState::new(scene.params.packed_len(false), options.lr);
    let mut offsets_adam = AdamState::new(3 * scene.model.vertex_count(), options.offsets_lr);
    let initial_metrics = metrics_for(scene, &scene.compose()?, options.contact_threshold);
    let mut trace = Vec::with_capacity(if options.trace { options.iterations } else { 0 });

    for iteration in 0..options.iterations {
        let hand = scene.compose()?;
        let loss = total_loss_for(scene, &hand, masks, weights, reg.as_ref())?;
        if !loss.value().is_finite() || loss.packed.iter().any(|g| !g.is_finite()) {
            let snapshot = serde_json::to_string(&scene.params).unwrap_or_default();
            return Err(HoiError::NonFinite { iteration, snapshot });
        }
        if options.trace {
            trace.push(loss.breakdown);
        }
        adam_step(&mut adam, &mut scene.params, &loss.grad);
        if reg.is_some() {
            let mut x: Vec<f64> = scene.params.pose.offsets.iter().flat_map(|o| o.iter().copied()).collect();
            let g: Vec<f64> = loss.grad.offsets.iter().flat_map(|o| o.iter().copied()).collect();
            offsets_adam.update(&mut x, &g);
            for (o, c) in scene.params.pose.offsets.iter_mut().zip(x.chunks(3)) {
                *o = crate::Vec3::new(c[0], c[1], c[2]);
            }
        }
    }
    let metrics = metrics_for(scene, &scene.compose()?, options.contact_threshold);
    Ok(OptimizeResult { params: scene.params.clone(), trace, initial_metrics, metrics })
}
