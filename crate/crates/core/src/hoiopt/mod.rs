//! Hand-object fitting against a frozen object: scene composition,
//! penetration, frozen contact masks, losses with analytic gradients, the
//! Adam loop and evaluation metrics.

mod losses;
mod optim;
mod params;
mod scene;
mod synthetic;

pub use losses::{
    loss_cons, loss_hc, loss_oc, loss_pene, loss_repos, total_loss, LossBreakdown, LossTerm, OffsetRegularizer,
    TotalLoss,
};
pub use optim::{adam_step, optimize, AdamState, OptimizeOptions, OptimizeResult};
pub use synthetic::SphereGrasp;
pub use params::{HoiParams, ParamGrad, DEFAULT_HAND_SCALE};
pub use scene::{
    compose_hand, contact_ratio, detect_penetration, init_contact_masks, metrics, ComposedHand, ContactMasks,
    HoiScene, Metrics, PenetrationPair, CONTACT_TOP_K, DEFAULT_CONTACT_THRESHOLD,
};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gaussmap::GaussmapError;
use crate::geometry::GeometryError;
use crate::hand::HandError;
use crate::Vec3;

#[derive(Debug, Error)]
pub enum HoiError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("non-finite loss at iteration {iteration}")]
    NonFinite {
        iteration: usize,
        /// Parameters at the failing iteration, as JSON.
        snapshot: String,
    },
    #[error(transparent)]
    Hand(#[from] HandError),
    #[error(transparent)]
    Gaussmap(#[from] GaussmapError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

pub type Result<T, E = HoiError> = std::result::Result<T, E>;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LossWeights {
    pub pene: f64,
    pub hc: f64,
    pub oc: f64,
    pub repos: f64,
    pub cons: f64,
    /// Per-axis weights on pose deviation, applied to every pose row.
    pub pose_axes: Vec3,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self { pene: 10.0, hc: 0.5, oc: 0.5, repos: 1.0, cons: 1.0, pose_axes: Vec3::new(10.0, 10.0, 1.0) }
    }
}

impl LossWeights {
    pub fn zero() -> Self {
        Self { pene: 0.0, hc: 0.0, oc: 0.0, repos: 0.0, cons: 0.0, pose_axes: Vec3::new(10.0, 10.0, 1.0) }
    }

    pub fn validate(&self) -> Result<()> {
        let all = [self.pene, self.hc, self.oc, self.repos, self.cons, self.pose_axes.x, self.pose_axes.y, self.pose_axes.z];
        if all.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(HoiError::Config(format!("loss weights must be finite and non-negative: {self:?}")));
        }
        Ok(())
    }
}
