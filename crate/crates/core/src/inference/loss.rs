use crate::fb::FbModel;
use crate::mdp::softmax;

/// Squared distance `sum_a (p(a) - q(a))^2` between two action
/// distributions; lies in `[0, 2]`.
pub fn imitation_loss(policy_row: &[f64], expert_row: &[f64]) -> f64 {
    policy_row
        .iter()
        .zip(expert_row)
        .map(|(p, q)| (p - q) * (p - q))
        .sum()
}

/// Imitation loss at state `s` for `pi_z` and its gradient with respect to
/// `z`, differentiating through the softmax over `F(s,a,z)^T z`.
pub fn imitation_loss_and_grad(
    model: &FbModel,
    z: &[f64],
    s: usize,
    expert_row: &[f64],
    temperature: f64,
) -> (f64, Vec<f64>) {
    let na = model.n_actions();
    let forwards: Vec<Vec<f64>> = (0..na).map(|a| model.forward_embed(s, a, z)).collect();
    let scores: Vec<f64> = forwards
        .iter()
        .map(|f| f.iter().zip(z).map(|(x, y)| x * y).sum())
        .collect();
    let pi = softmax(&scores, temperature);
    let loss = imitation_loss(&pi, expert_row);

    // dL/dpi, then through the softmax Jacobian.
    let g: Vec<f64> = pi.iter().zip(expert_row).map(|(p, q)| 2.0 * (p - q)).collect();
    let mean_g: f64 = pi.iter().zip(&g).map(|(p, x)| p * x).sum();
    let mut grad = vec![0.0; z.len()];
    for a in 0..na {
        let dscore = pi[a] * (g[a] - mean_g) / temperature;
        if dscore == 0.0 {
            continue;
        }
        // d(F^T z)/dz = (Theta + Theta^T) z + theta0 = F + Theta^T z
        let tz = model.theta_transpose_times(s, a, z);
        for ((o, f), t) in grad.iter_mut().zip(&forwards[a]).zip(&tz) {
            *o += dscore * (f + t);
        }
    }
    (loss, grad)
}

/// Imitation loss of `pi_z` in every state against `expert_rows[s]`.
pub fn state_losses(model: &FbModel, z: &[f64], expert_rows: &[Vec<f64>]) -> Vec<f64> {
    (0..model.n_states())
        .map(|s| {
            let pi = softmax(&model.action_scores(s, z), model.temperature);
            imitation_loss(&pi, &expert_rows[s])
        })
        .collect()
}


/// Per-item losses and `z`-gradients for a minibatch of expert states.
pub(crate) struct BatchTerms {
    pub losses: Vec<f64>,
    pub grads: Vec<Vec<f64>>,
}

pub(crate) fn batch_terms(
    model: &FbModel,
    z: &[f64],
    expert: &super::ExpertDataset,
    states: &[usize],
) -> BatchTerms {
    let mut losses = Vec::with_capacity(states.len());
    let mut grads = Vec::with_capacity(states.len());
    for &s in states {
        let (l, g) = imitation_loss_and_grad(model, z, s, expert.expert_row(s), model.temperature);
        losses.push(l);
        grads.push(g);
    }
    BatchTerms { losses, grads }
}

/// `sum_i weights[i] * grads[i]`, accumulated in item order.
pub(crate) fn weighted_grad(grads: &[Vec<f64>], weights: &[f64], dim: usize) -> Vec<f64> {
    let mut out = vec![0.0; dim];
    for (g, &w) in grads.iter().zip(weights) {
        for (o, x) in out.iter_mut().zip(g) {
            *o += w * x;
        }
    }
    out
}
