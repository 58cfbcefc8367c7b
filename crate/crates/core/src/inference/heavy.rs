use serde::{Deserialize, Serialize};

use super::expert::warm_start_z;
use super::loss::{imitation_loss, imitation_loss_and_grad};
use super::softtv::{soft_tv_f, soft_tv_fprime_inv_clipped};
use super::{ExpertDataset, InferenceResult, Method};
use crate::error::{Error, Result};
use crate::fb::{FbModel, LatentVector};
use crate::mdp::{softmax, SaTable};
use crate::optim::Adam;
use crate::rng::{sample_indices, RngSeed};

/// Multipliers of the flow constraints (`q`) and of the divergence cap
/// (`tau >= 0`).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HeavyDualState {
    pub q: SaTable,
    pub tau: f64,
}

impl HeavyDualState {
    pub fn new(n_states: usize, n_actions: usize) -> Self {
        Self {
            q: SaTable::zeros(n_states, n_actions),
            tau: 1.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HeavyConfig {
    /// Radius of the SoftTV divergence ball.
    pub eps: f64,
    pub steps: usize,
    pub lr_z: f64,
    pub lr_dual: f64,
    pub batch_size: usize,
    pub gamma: f64,
    /// Cap on importance weights; stands in for `+inf` when `tau = 0`.
    pub w_max: f64,
    /// Keeps `c / tau` at least this far inside `(-0.5, 0.5)`.
    pub y_clip: f64,
    /// `[z updates, dual updates]` per iteration.
    pub update_ratio: [usize; 2],
    pub seed: RngSeed,
}

impl Default for HeavyConfig {
    fn default() -> Self {
        Self {
            eps: 0.8,
            steps: 5_000,
            lr_z: 3e-4,
            lr_dual: 3e-4,
            batch_size: 512,
            gamma: 0.99,
            w_max: 10.0,
            y_clip: 1e-3,
            update_ratio: [1, 1],
            seed: RngSeed(0),
        }
    }
}

impl HeavyConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.eps >= 0.0) {
            return Err(Error::InvalidArgument("eps must be non-negative".into()));
        }
        if !(self.gamma >= 0.0 && self.gamma < 1.0) {
            return Err(Error::BadDiscount(self.gamma));
        }
        if !(self.y_clip > 0.0 && self.y_clip < 0.5) {
            return Err(Error::InvalidArgument("y_clip must be in (0, 0.5)".into()));
        }
        if !(self.w_max > 0.0) {
            return Err(Error::InvalidArgument("w_max must be positive".into()));
        }
        if self.update_ratio.iter().any(|&n| n == 0) {
            return Err(Error::InvalidArgument("update ratio entries must be positive".into()));
        }
        Ok(())
    }
}

/// Closed-form inner maximizer of `-tau f(w) + c w` over `w >= 0`.
///
/// For `tau > 0` this is `max(0, (f')^{-1}(c / tau))` with `c / tau` clipped
/// by `y_clip` and the result capped at `w_max`. For `tau = 0` the maximizer
/// is `+inf` when `c > 0`, replaced here by `w_max`.
pub fn optimal_weight(c: f64, tau: f64, config: &HeavyConfig) -> f64 {
    if tau <= 0.0 {
        return if c > 0.0 { config.w_max } else { 0.0 };
    }
    soft_tv_fprime_inv_clipped(c / tau, config.y_clip).clamp(0.0, config.w_max)
}

/// `c(s,a,s') = L(s) + gamma E_{a'~pi_D(.|s')} Q(s',a') - Q(s,a)`.
#[allow(clippy::too_many_arguments)]
pub fn heavy_c(
    model: &FbModel,
    z: &[f64],
    expert_rows: &[Vec<f64>],
    dual: &HeavyDualState,
    gamma: f64,
    s: usize,
    a: usize,
    s_next: usize,
) -> f64 {
    let pi = softmax(&model.action_scores(s, z), model.temperature);
    let loss = imitation_loss(&pi, &expert_rows[s]);
    c_value(loss, dual, &expert_rows[s_next], gamma, s, a, s_next)
}

fn c_value(
    loss: f64,
    dual: &HeavyDualState,
    expert_next: &[f64],
    gamma: f64,
    s: usize,
    a: usize,
    s_next: usize,
) -> f64 {
    let next_q: f64 = dual
        .q
        .row(s_next)
        .iter()
        .zip(expert_next)
        .map(|(q, p)| q * p)
        .sum();
    loss + gamma * next_q - dual.q.get(s, a)
}

/// A weighted `(s, a, s')` sample standing in for the expert occupancy.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct WeightedTransition {
    pub s: usize,
    pub a: usize,
    pub s_next: usize,
    pub weight: f64,
}

/// A weighted initial state; actions are averaged under `pi_D`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct InitialItem {
    pub s: usize,
    pub weight: f64,
}

/// Minibatch for the dual objective. A uniform minibatch uses weights
/// `1/b`; passing the exact occupancy and `mu` gives exact expectations.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct HeavyBatch {
    pub transitions: Vec<WeightedTransition>,
    pub initial: Vec<InitialItem>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct HeavyGrads {
    pub critic_loss: f64,
    pub actor_loss: f64,
    pub grad_q: Vec<f64>,
    pub grad_tau: f64,
    pub grad_z: Vec<f64>,
    /// `c` per transition.
    pub c: Vec<f64>,
    /// `w*` per transition (the frozen weights when supplied).
    pub weights: Vec<f64>,
}

/// Critic objective
/// `(1-gamma) E_mu E_piD[Q] + eps tau + E[-tau f(w*) + w* c]`
/// and actor objective `E[w* L(s)]` with gradients.
///
/// `w*` is a constant for differentiation. When `frozen_weights` is given
/// those values replace the closed form.
#[allow(clippy::too_many_arguments)]
pub fn heavy_losses_and_grads(
    model: &FbModel,
    z: &[f64],
    expert_rows: &[Vec<f64>],
    dual: &HeavyDualState,
    config: &HeavyConfig,
    batch: &HeavyBatch,
    frozen_weights: Option<&[f64]>,
) -> HeavyGrads {
    let (ns, na) = (model.n_states(), model.n_actions());
    let gamma = config.gamma;
    let mut per_state: Vec<Option<(f64, Vec<f64>)>> = vec![None; ns];
    let mut critic_loss = config.eps * dual.tau;
    let mut grad_q = vec![0.0; ns * na];
    let mut grad_tau = config.eps;

    for item in &batch.initial {
        let row = &expert_rows[item.s];
        for a in 0..na {
            let coef = (1.0 - gamma) * item.weight * row[a];
            critic_loss += coef * dual.q.get(item.s, a);
            grad_q[item.s * na + a] += coef;
        }
    }

    let mut actor_loss = 0.0;
    let mut grad_z = vec![0.0; z.len()];
    let mut cs = Vec::with_capacity(batch.transitions.len());
    let mut ws = Vec::with_capacity(batch.transitions.len());
    for (i, t) in batch.transitions.iter().enumerate() {
        let (loss, loss_grad) = per_state[t.s].get_or_insert_with(|| {
            imitation_loss_and_grad(model, z, t.s, &expert_rows[t.s], model.temperature)
        });
        let c = c_value(*loss, dual, &expert_rows[t.s_next], gamma, t.s, t.a, t.s_next);
        let w = match frozen_weights {
            Some(ws) => ws[i],
            None => optimal_weight(c, dual.tau, config),
        };
        critic_loss += t.weight * (-dual.tau * soft_tv_f(w) + w * c);
        grad_tau -= t.weight * soft_tv_f(w);
        for (a_next, p) in expert_rows[t.s_next].iter().enumerate() {
            grad_q[t.s_next * na + a_next] += t.weight * w * gamma * p;
        }
        grad_q[t.s * na + t.a] -= t.weight * w;

        actor_loss += t.weight * w * *loss;
        for (g, lg) in grad_z.iter_mut().zip(loss_grad.iter()) {
            *g += t.weight * w * lg;
        }
        cs.push(c);
        ws.push(w);
    }

    HeavyGrads {
        critic_loss,
        actor_loss,
        grad_q,
        grad_tau,
        grad_z,
        c: cs,
        weights: ws,
    }
}

fn sample_batch<R: rand::Rng + ?Sized>(
    expert: &ExpertDataset,
    b: usize,
    rng: &mut R,
) -> HeavyBatch {
    let transitions = expert.transitions();
    let w = 1.0 / b as f64;
    let picked = sample_indices(rng, transitions.len(), b);
    // every expert state serves as an effective initial state
    let initial = sample_indices(rng, transitions.len(), b);
    HeavyBatch {
        transitions: picked
            .into_iter()
            .map(|i| {
                let t = transitions[i];
                WeightedTransition {
                    s: t.s,
                    a: t.a,
                    s_next: t.s_next,
                    weight: w,
                }
            })
            .collect(),
        initial: initial
            .into_iter()
            .map(|i| InitialItem {
                s: transitions[i].s,
                weight: w,
            })
            .collect(),
    }
}

/// Robust inference over flow-consistent occupancies in a SoftTV ball.
///
/// Starts from `Q = 0`, `tau = 1` and the warm-start latent. Each iteration
/// computes `c` and `w*` on a minibatch, takes Adam steps on `(Q, tau)` with
/// `tau` projected to `[0, inf)`, then Adam steps on `z` against the weighted
/// imitation loss.
pub fn infer_rbfm_heavy(
    model: &FbModel,
    expert: &ExpertDataset,
    config: &HeavyConfig,
) -> Result<InferenceResult> {
    config.validate()?;
    let mut z = warm_start_z(model, expert)?;
    let rows = expert.expert_rows();
    let mut dual = HeavyDualState::new(model.n_states(), model.n_actions());
    let mut opt_z = Adam::new(z.dim(), config.lr_z);
    let mut opt_q = Adam::new(dual.q.values.len(), config.lr_dual);
    let mut opt_tau = Adam::new(1, config.lr_dual);
    let mut rng = config.seed.rng();
    let b = config.batch_size.max(1);
    let [z_updates, dual_updates] = config.update_ratio;
    let mut loss_trace = Vec::with_capacity(config.steps);
    let mut tau_trace = Vec::with_capacity(config.steps);
    for _ in 0..config.steps {
        let mut batch = sample_batch(expert, b, &mut rng);
        let mut grads =
            heavy_losses_and_grads(model, z.as_slice(), &rows, &dual, config, &batch, None);
        for k in 0..dual_updates {
            if k > 0 {
                batch = sample_batch(expert, b, &mut rng);
                grads = heavy_losses_and_grads(model, z.as_slice(), &rows, &dual, config, &batch, None);
            }
            opt_q.step(&mut dual.q.values, &grads.grad_q);
            let mut tau = [dual.tau];
            opt_tau.step(&mut tau, &[grads.grad_tau]);
            dual.tau = tau[0].max(0.0);
        }
        loss_trace.push(grads.critic_loss);
        tau_trace.push(dual.tau);
        for k in 0..z_updates {
            if k > 0 {
                batch = sample_batch(expert, b, &mut rng);
                grads = heavy_losses_and_grads(model, z.as_slice(), &rows, &dual, config, &batch, None);
            }
            let mut raw = z.into_vec();
            opt_z.step(&mut raw, &grads.grad_z);
            z = LatentVector::project(raw)?;
        }
        if !grads.critic_loss.is_finite() {
            return Err(Error::NonFinite);
        }
    }
    Ok(InferenceResult {
        method: Method::RbfmHeavy,
        z,
        loss_trace,
        lambda_trace: None,
        tau_trace: Some(tau_trace),
        config: serde_json::to_value(config)?,
        seed: config.seed,
    })
}
