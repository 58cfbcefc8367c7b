use serde::{Deserialize, Serialize};

use super::expert::warm_start_z;
use super::loss::{batch_terms, weighted_grad};
use super::{ExpertDataset, InferenceResult, Method};
use crate::error::{Error, Result};
use crate::fb::{FbModel, LatentVector};
use crate::optim::Adam;
use crate::rng::{sample_indices, RngSeed};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LightConfig {
    /// Radius of the TV ball in state-occupancy space.
    pub eps_l: f64,
    pub steps: usize,
    pub lr: f64,
    pub batch_size: usize,
    pub seed: RngSeed,
    /// Holds `lambda` fixed instead of minimizing it per minibatch.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pin_lambda: Option<f64>,
}

impl Default for LightConfig {
    fn default() -> Self {
        Self {
            eps_l: 0.8,
            steps: 5_000,
            lr: 5e-4,
            batch_size: 512,
            seed: RngSeed(0),
            pin_lambda: None,
        }
    }
}

/// Largest loss among entries with positive weight, or over all entries
/// when no weight is positive. Returns the first maximizing index.
fn support_max(losses: &[f64], weights: &[f64]) -> (usize, f64) {
    let any_positive = weights.iter().any(|&w| w > 0.0);
    let mut best = (usize::MAX, f64::NEG_INFINITY);
    for (i, (&l, &w)) in losses.iter().zip(weights).enumerate() {
        if (w > 0.0 || !any_positive) && l > best.1 {
            best = (i, l);
        }
    }
    best
}

/// `E_w[(L - lambda)_+] + eps_l (max L - lambda)_+ + lambda`.
pub fn light_dual_value(losses: &[f64], weights: &[f64], eps_l: f64, lambda: f64) -> f64 {
    let (_, max) = support_max(losses, weights);
    let hinge: f64 = losses
        .iter()
        .zip(weights)
        .map(|(&l, &w)| w * (l - lambda).max(0.0))
        .sum();
    hinge + eps_l * (max - lambda).max(0.0) + lambda
}

/// Exact minimizer of [`light_dual_value`] over `lambda`.
///
/// The objective is convex and piecewise linear with kinks at the loss
/// values, so it is enough to compare the candidates `{0} U losses U {max}`.
/// Values are swept with suffix sums over the sorted losses; ties go to the
/// smallest `lambda`.
pub fn light_minimize_lambda(losses: &[f64], weights: &[f64], eps_l: f64) -> (f64, f64) {
    debug_assert!(losses.iter().all(|&l| l >= 0.0));
    let (_, max) = support_max(losses, weights);
    let mut pairs: Vec<(f64, f64)> = losses
        .iter()
        .copied()
        .zip(weights.iter().copied())
        .collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut candidates: Vec<f64> = std::iter::once(0.0)
        .chain(pairs.iter().map(|p| p.0))
        .chain(std::iter::once(max))
        .collect();
    candidates.sort_by(f64::total_cmp);
    candidates.dedup();

    // suffix sums of w and w*L over losses strictly above each candidate
    let n = pairs.len();
    let mut suffix_w = vec![0.0; n + 1];
    let mut suffix_wl = vec![0.0; n + 1];
    for i in (0..n).rev() {
        suffix_w[i] = suffix_w[i + 1] + pairs[i].1;
        suffix_wl[i] = suffix_wl[i + 1] + pairs[i].1 * pairs[i].0;
    }
    let mut first_above = 0;
    let mut best_lambda = candidates[0];
    let mut best_value = f64::INFINITY;
    for &lambda in &candidates {
        while first_above < n && pairs[first_above].0 <= lambda {
            first_above += 1;
        }
        let value = suffix_wl[first_above] - lambda * suffix_w[first_above]
            + eps_l * (max - lambda).max(0.0)
            + lambda;
        if best_value.is_infinite() || value < best_value - 1e-12 * best_value.abs().max(1.0) {
            best_value = value;
            best_lambda = lambda;
        }
    }
    (best_lambda, light_dual_value(losses, weights, eps_l, best_lambda))
}

/// Robust inference over a TV ball around the expert state distribution.
///
/// Each step solves `lambda` exactly on the minibatch and then takes one
/// Adam step on `z` with `lambda` held fixed: active hinge items contribute
/// `1/b` of their gradient and the argmax item an extra `eps_l`.
pub fn infer_rbfm_light(
    model: &FbModel,
    expert: &ExpertDataset,
    config: &LightConfig,
) -> Result<InferenceResult> {
    if !(config.eps_l >= 0.0) {
        return Err(Error::InvalidArgument("eps_l must be non-negative".into()));
    }
    let mut z = warm_start_z(model, expert)?;
    let mut opt = Adam::new(z.dim(), config.lr);
    let mut rng = config.seed.rng();
    let visits = expert.visits();
    let b = config.batch_size.max(1);
    let uniform = vec![1.0 / b as f64; b];
    let mut loss_trace = Vec::with_capacity(config.steps);
    let mut lambda_trace = Vec::with_capacity(config.steps);
    for _ in 0..config.steps {
        let states: Vec<usize> = sample_indices(&mut rng, visits.len(), b)
            .into_iter()
            .map(|i| visits[i])
            .collect();
        let terms = batch_terms(model, z.as_slice(), expert, &states);
        let (lambda, value) = match config.pin_lambda {
            Some(l) => (l, light_dual_value(&terms.losses, &uniform, config.eps_l, l)),
            None => light_minimize_lambda(&terms.losses, &uniform, config.eps_l),
        };
        loss_trace.push(value);
        lambda_trace.push(lambda);

        let mut weights: Vec<f64> = terms
            .losses
            .iter()
            .zip(&uniform)
            .map(|(&l, &w)| if l > lambda { w } else { 0.0 })
            .collect();
        let (arg, max) = support_max(&terms.losses, &uniform);
        if config.eps_l > 0.0 && max > lambda {
            weights[arg] += config.eps_l;
        }
        let grad = weighted_grad(&terms.grads, &weights, z.dim());
        let mut raw = z.into_vec();
        opt.step(&mut raw, &grad);
        z = LatentVector::project(raw)?;
    }
    Ok(InferenceResult {
        method: Method::RbfmLight,
        z,
        loss_trace,
        lambda_trace: Some(lambda_trace),
        tau_trace: None,
        config: serde_json::to_value(config)?,
        seed: config.seed,
    })
}
