use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mdp::{RewardTable, StochasticPolicy, TabularMdp};
use crate::occupancy::policy_evaluation;
use crate::rng::sample_categorical;

/// Exact `E_mu E_pi[sum_t gamma^t r(s_{t+1})]` by one linear solve.
pub fn evaluate_policy_exact(mdp: &TabularMdp, policy: &StochasticPolicy, reward: &RewardTable) -> Result<f64> {
    let (v, _) = policy_evaluation(mdp, policy, reward)?;
    Ok(mdp.mu().iter().zip(&v).map(|(m, v)| m * v).sum())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MonteCarloEstimate {
    pub mean: f64,
    pub stderr: f64,
    pub episodes: usize,
}

impl MonteCarloEstimate {
    /// Whether `exact` lies within `k` standard errors, with a small absolute
    /// floor for deterministic returns.
    pub fn agrees_with(&self, exact: f64, k: f64) -> bool {
        (self.mean - exact).abs() <= k * self.stderr + 1e-9 * exact.abs().max(1.0)
    }
}

/// Episodes run until `gamma^t < 1e-8`; the neglected tail is below
/// `1e-8 * max|r| / (1 - gamma)`.
pub fn mc_horizon(gamma: f64) -> usize {
    ((1e-8_f64).ln() / gamma.ln()).ceil() as usize
}

pub fn evaluate_policy_mc<R: Rng + ?Sized>(
    mdp: &TabularMdp,
    policy: &StochasticPolicy,
    reward: &RewardTable,
    episodes: usize,
    rng: &mut R,
) -> Result<MonteCarloEstimate> {
    if episodes < 2 {
        return Err(Error::InvalidArgument("need at least two episodes".into()));
    }
    mdp.check_policy(policy)?;
    mdp.check_reward(reward)?;
    let horizon = mc_horizon(mdp.gamma());
    let mut returns = Vec::with_capacity(episodes);
    for _ in 0..episodes {
        let mut s = sample_categorical(rng, mdp.mu());
        let mut discount = 1.0;
        let mut total = 0.0;
        for _ in 0..horizon {
            let a = sample_categorical(rng, policy.row(s));
            s = sample_categorical(rng, mdp.row(s, a));
            total += discount * reward.r[s];
            discount *= mdp.gamma();
        }
        returns.push(total);
    }
    let n = episodes as f64;
    let mean = returns.iter().sum::<f64>() / n;
    let var = returns.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    Ok(MonteCarloEstimate { mean, stderr: (var / n).sqrt(), episodes })
}
