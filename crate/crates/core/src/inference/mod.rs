//! Task-vector inference from expert demonstrations.
//!
//! All three methods start at the warm-start latent and run Adam on `z`,
//! re-projecting to the radius-`sqrt(d)` sphere after every step. They differ
//! only in how per-state imitation losses are weighted:
//!
//! - FB-IL: the empirical expert state distribution.
//! - RBFM-Light: the worst case over a TV ball around it, through an exact
//!   one-dimensional dual.
//! - RBFM-Heavy: the worst case over flow-consistent occupancies within a
//!   SoftTV divergence ball, through closed-form importance weights.

mod expert;
mod fb_il;
mod heavy;
mod light;
mod loss;
mod softtv;

pub use expert::{warm_start_z, ExpertDataset, ExpertDocument};
pub use fb_il::{infer_fb_il, FbIlConfig};
pub use heavy::{
    heavy_c, heavy_losses_and_grads, infer_rbfm_heavy, optimal_weight, HeavyBatch, HeavyConfig,
    HeavyDualState, HeavyGrads, InitialItem, WeightedTransition,
};
pub use light::{infer_rbfm_light, light_dual_value, light_minimize_lambda, LightConfig};
pub use loss::{imitation_loss, imitation_loss_and_grad, state_losses};
pub use softtv::{soft_tv_f, soft_tv_fprime, soft_tv_fprime_inv, soft_tv_fprime_inv_clipped};

use serde::{Deserialize, Serialize};

use crate::fb::LatentVector;
use crate::rng::RngSeed;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    FbIl,
    RbfmLight,
    RbfmHeavy,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::FbIl, Method::RbfmLight, Method::RbfmHeavy];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::FbIl => "fb_il",
            Method::RbfmLight => "rbfm_light",
            Method::RbfmHeavy => "rbfm_heavy",
        }
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Method {
    type Err = crate::Error;

    fn from_str(s: &str) -> crate::Result<Self> {
        match s {
            "fb_il" => Ok(Method::FbIl),
            "rbfm_light" => Ok(Method::RbfmLight),
            "rbfm_heavy" => Ok(Method::RbfmHeavy),
            other => Err(crate::Error::InvalidArgument(format!("unknown method {other}"))),
        }
    }
}

/// Output of one inference run, serialized as the `infer` result document.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InferenceResult {
    pub method: Method,
    pub z: LatentVector,
    pub loss_trace: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda_trace: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tau_trace: Option<Vec<f64>>,
    pub config: serde_json::Value,
    pub seed: RngSeed,
}
