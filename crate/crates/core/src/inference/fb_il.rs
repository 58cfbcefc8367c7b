use serde::{Deserialize, Serialize};

use super::expert::warm_start_z;
use super::loss::{batch_terms, weighted_grad};
use super::{ExpertDataset, InferenceResult, Method};
use crate::error::Result;
use crate::fb::{FbModel, LatentVector};
use crate::optim::Adam;
use crate::rng::{sample_indices, RngSeed};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FbIlConfig {
    pub steps: usize,
    pub lr: f64,
    pub batch_size: usize,
    pub seed: RngSeed,
}

impl Default for FbIlConfig {
    fn default() -> Self {
        Self {
            steps: 3_000,
            lr: 1e-3,
            batch_size: 512,
            seed: RngSeed(0),
        }
    }
}

/// Minimizes the expected imitation loss under the empirical expert state
/// distribution, starting from the warm-start latent.
pub fn infer_fb_il(
    model: &FbModel,
    expert: &ExpertDataset,
    config: &FbIlConfig,
) -> Result<InferenceResult> {
    let mut z = warm_start_z(model, expert)?;
    let mut opt = Adam::new(z.dim(), config.lr);
    let mut rng = config.seed.rng();
    let visits = expert.visits();
    let b = config.batch_size.max(1);
    let weights = vec![1.0 / b as f64; b];
    let mut loss_trace = Vec::with_capacity(config.steps);
    for _ in 0..config.steps {
        let states: Vec<usize> = sample_indices(&mut rng, visits.len(), b)
            .into_iter()
            .map(|i| visits[i])
            .collect();
        let terms = batch_terms(model, z.as_slice(), expert, &states);
        loss_trace.push(terms.losses.iter().sum::<f64>() / b as f64);
        let grad = weighted_grad(&terms.grads, &weights, z.dim());
        let mut raw = z.into_vec();
        opt.step(&mut raw, &grad);
        z = LatentVector::project(raw)?;
    }
    Ok(InferenceResult {
        method: Method::FbIl,
        z,
        loss_trace,
        lambda_trace: None,
        tau_trace: None,
        config: serde_json::to_value(config)?,
        seed: config.seed,
    })
}
