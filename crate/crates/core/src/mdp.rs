//! Finite MDPs, simulation and exact dynamic programming.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{sample_categorical, RngSeed};

const ROW_TOL: f64 = 1e-12;

/// Finite MDP with row-stochastic kernel `T[s][a][s']`, initial
/// distribution `mu` and discount `gamma`.
///
/// The kernel is stored flat; `row(s, a)` gives `T(.|s, a)`.
#[derive(Clone, Debug, PartialEq)]
pub struct TabularMdp {
    n_states: usize,
    n_actions: usize,
    gamma: f64,
    mu: Vec<f64>,
    kernel: Vec<f64>,
}

impl TabularMdp {
    pub fn new(
        n_states: usize,
        n_actions: usize,
        kernel: Vec<f64>,
        mu: Vec<f64>,
        gamma: f64,
    ) -> Result<Self> {
        if n_states == 0 || n_actions == 0 {
            return Err(Error::DimensionMismatch(
                "MDP needs at least one state and one action".into(),
            ));
        }
        if kernel.len() != n_states * n_actions * n_states {
            return Err(Error::DimensionMismatch(format!(
                "kernel has {} entries, expected {}",
                kernel.len(),
                n_states * n_actions * n_states
            )));
        }
        if mu.len() != n_states {
            return Err(Error::DimensionMismatch(format!(
                "mu has {} entries, expected {n_states}",
                mu.len()
            )));
        }
        let mdp = Self {
            n_states,
            n_actions,
            gamma,
            mu,
            kernel,
        };
        validate_mdp(&mdp)?;
        Ok(mdp)
    }

    pub fn from_nested(kernel: Vec<Vec<Vec<f64>>>, mu: Vec<f64>, gamma: f64) -> Result<Self> {
        let n_states = kernel.len();
        let n_actions = kernel.first().map_or(0, Vec::len);
        let mut flat = Vec::with_capacity(n_states * n_actions * n_states);
        for (s, per_action) in kernel.into_iter().enumerate() {
            if per_action.len() != n_actions {
                return Err(Error::DimensionMismatch(format!(
                    "state {s} has {} actions, expected {n_actions}",
                    per_action.len()
                )));
            }
            for (a, row) in per_action.into_iter().enumerate() {
                if row.len() != n_states {
                    return Err(Error::DimensionMismatch(format!(
                        "row ({s}, {a}) has {} entries, expected {n_states}",
                        row.len()
                    )));
                }
                flat.extend(row);
            }
        }
        Self::new(n_states, n_actions, flat, mu, gamma)
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn mu(&self) -> &[f64] {
        &self.mu
    }

    pub fn kernel(&self) -> &[f64] {
        &self.kernel
    }

    /// `T(.|s, a)`.
    pub fn row(&self, s: usize, a: usize) -> &[f64] {
        let start = (s * self.n_actions + a) * self.n_states;
        &self.kernel[start..start + self.n_states]
    }

    /// Same states, actions, `mu` and `gamma` with a different kernel.
    pub fn with_kernel(&self, kernel: Vec<f64>) -> Result<Self> {
        Self::new(
            self.n_states,
            self.n_actions,
            kernel,
            self.mu.clone(),
            self.gamma,
        )
    }

    pub fn with_gamma(&self, gamma: f64) -> Result<Self> {
        Self::new(
            self.n_states,
            self.n_actions,
            self.kernel.clone(),
            self.mu.clone(),
            gamma,
        )
    }

    /// State-to-state matrix `P_pi(s'|s) = sum_a pi(a|s) T(s'|s,a)`, row-major.
    pub fn policy_transition(&self, policy: &StochasticPolicy) -> Result<Vec<f64>> {
        self.check_policy(policy)?;
        let n = self.n_states;
        let mut p = vec![0.0; n * n];
        for s in 0..n {
            for a in 0..self.n_actions {
                let pa = policy.prob(s, a);
                if pa == 0.0 {
                    continue;
                }
                for (dst, &t) in p[s * n..(s + 1) * n].iter_mut().zip(self.row(s, a)) {
                    *dst += pa * t;
                }
            }
        }
        Ok(p)
    }

    pub fn check_policy(&self, policy: &StochasticPolicy) -> Result<()> {
        if policy.n_states() != self.n_states || policy.n_actions() != self.n_actions {
            return Err(Error::DimensionMismatch(format!(
                "policy is {}x{}, MDP is {}x{}",
                policy.n_states(),
                policy.n_actions(),
                self.n_states,
                self.n_actions
            )));
        }
        Ok(())
    }

    pub fn check_reward(&self, reward: &RewardTable) -> Result<()> {
        if reward.r.len() != self.n_states {
            return Err(Error::DimensionMismatch(format!(
                "reward has {} entries, MDP has {} states",
                reward.r.len(),
                self.n_states
            )));
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(&MdpDocument::from(self))?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: MdpDocument = serde_json::from_str(text)?;
        doc.try_into()
    }
}

/// Checks every structural invariant of a [`TabularMdp`].
pub fn validate_mdp(mdp: &TabularMdp) -> Result<()> {
    if !(mdp.gamma > 0.0 && mdp.gamma < 1.0) {
        return Err(Error::BadDiscount(mdp.gamma));
    }
    for s in 0..mdp.n_states {
        for a in 0..mdp.n_actions {
            let row = mdp.row(s, a);
            let row_sum: f64 = row.iter().sum();
            if row.iter().any(|&p| !(p >= 0.0)) || (row_sum - 1.0).abs() > ROW_TOL {
                return Err(Error::NonStochasticRow {
                    state: s,
                    action: a,
                    row_sum,
                });
            }
        }
    }
    let mu_sum: f64 = mdp.mu.iter().sum();
    if mdp.mu.iter().any(|&p| !(p >= 0.0)) || (mu_sum - 1.0).abs() > ROW_TOL {
        return Err(Error::BadInitialDistribution(mu_sum));
    }
    Ok(())
}

/// JSON layout: `{"n_states", "n_actions", "gamma", "mu", "kernel"}` with a
/// nested `kernel[s][a][s']`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MdpDocument {
    pub n_states: usize,
    pub n_actions: usize,
    pub gamma: f64,
    pub mu: Vec<f64>,
    pub kernel: Vec<Vec<Vec<f64>>>,
}

impl From<&TabularMdp> for MdpDocument {
    fn from(mdp: &TabularMdp) -> Self {
        let kernel = (0..mdp.n_states)
            .map(|s| (0..mdp.n_actions).map(|a| mdp.row(s, a).to_vec()).collect())
            .collect();
        Self {
            n_states: mdp.n_states,
            n_actions: mdp.n_actions,
            gamma: mdp.gamma,
            mu: mdp.mu.clone(),
            kernel,
        }
    }
}

impl TryFrom<MdpDocument> for TabularMdp {
    type Error = Error;

    fn try_from(doc: MdpDocument) -> Result<Self> {
        let mdp = TabularMdp::from_nested(doc.kernel, doc.mu, doc.gamma)?;
        if mdp.n_states != doc.n_states || mdp.n_actions != doc.n_actions {
            return Err(Error::DimensionMismatch(
                "declared shape disagrees with kernel".into(),
            ));
        }
        Ok(mdp)
    }
}

/// Per-state reward for one task. Rewards are collected on arrival, so
/// `r[s']` is paid for the transition into `s'`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RewardTable {
    pub name: String,
    pub r: Vec<f64>,
}

impl RewardTable {
    pub fn new(name: impl Into<String>, r: Vec<f64>) -> Result<Self> {
        if r.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite);
        }
        Ok(Self {
            name: name.into(),
            r,
        })
    }

    pub fn constant(name: impl Into<String>, n_states: usize, value: f64) -> Self {
        Self {
            name: name.into(),
            r: vec![value; n_states],
        }
    }
}

/// Table indexed by `(s, a)`, stored row-major.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SaTable {
    pub n_states: usize,
    pub n_actions: usize,
    pub values: Vec<f64>,
}

impl SaTable {
    pub fn zeros(n_states: usize, n_actions: usize) -> Self {
        Self {
            n_states,
            n_actions,
            values: vec![0.0; n_states * n_actions],
        }
    }

    pub fn get(&self, s: usize, a: usize) -> f64 {
        self.values[s * self.n_actions + a]
    }

    pub fn set(&mut self, s: usize, a: usize, v: f64) {
        self.values[s * self.n_actions + a] = v;
    }

    pub fn row(&self, s: usize) -> &[f64] {
        &self.values[s * self.n_actions..(s + 1) * self.n_actions]
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

/// `pi(a|s)` table. Rows are distributions.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StochasticPolicy {
    n_states: usize,
    n_actions: usize,
    probs: Vec<f64>,
}

impl StochasticPolicy {
    pub fn new(n_states: usize, n_actions: usize, probs: Vec<f64>) -> Result<Self> {
        if probs.len() != n_states * n_actions {
            return Err(Error::DimensionMismatch(format!(
                "policy has {} entries, expected {}",
                probs.len(),
                n_states * n_actions
            )));
        }
        for s in 0..n_states {
            let row = &probs[s * n_actions..(s + 1) * n_actions];
            let row_sum: f64 = row.iter().sum();
            if row.iter().any(|&p| !(p >= 0.0)) || (row_sum - 1.0).abs() > ROW_TOL {
                return Err(Error::BadPolicyRow { state: s, row_sum });
            }
        }
        Ok(Self {
            n_states,
            n_actions,
            probs,
        })
    }

    pub fn uniform(n_states: usize, n_actions: usize) -> Self {
        Self {
            n_states,
            n_actions,
            probs: vec![1.0 / n_actions as f64; n_states * n_actions],
        }
    }

    /// Deterministic policy taking `actions[s]` in state `s`.
    pub fn deterministic(n_actions: usize, actions: &[usize]) -> Result<Self> {
        let mut probs = vec![0.0; actions.len() * n_actions];
        for (s, &a) in actions.iter().enumerate() {
            if a >= n_actions {
                return Err(Error::InvalidArgument(format!("action {a} out of range")));
            }
            probs[s * n_actions + a] = 1.0;
        }
        Self::new(actions.len(), n_actions, probs)
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn prob(&self, s: usize, a: usize) -> f64 {
        self.probs[s * self.n_actions + a]
    }

    pub fn row(&self, s: usize) -> &[f64] {
        &self.probs[s * self.n_actions..(s + 1) * self.n_actions]
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }
}

/// A rollout `s_0, a_0, s_1, ..., a_{H-1}, s_H`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Trajectory {
    pub states: Vec<usize>,
    pub actions: Vec<usize>,
}

impl Trajectory {
    /// Number of transitions.
    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }

    /// `(s_t, a_t, s_{t+1})` triples.
    pub fn transitions(&self) -> impl Iterator<Item = (usize, usize, usize)> + '_ {
        self.actions
            .iter()
            .enumerate()
            .map(|(t, &a)| (self.states[t], a, self.states[t + 1]))
    }
}

pub fn rollout(
    mdp: &TabularMdp,
    policy: &StochasticPolicy,
    horizon: usize,
    seed: RngSeed,
) -> Result<Trajectory> {
    rollout_with(mdp, policy, horizon, &mut seed.rng())
}

/// [`rollout`] drawing from a caller-owned generator.
pub fn rollout_with<R: Rng + ?Sized>(
    mdp: &TabularMdp,
    policy: &StochasticPolicy,
    horizon: usize,
    rng: &mut R,
) -> Result<Trajectory> {
    if horizon == 0 {
        return Err(Error::InvalidArgument("horizon must be at least 1".into()));
    }
    mdp.check_policy(policy)?;
    let mut states = Vec::with_capacity(horizon + 1);
    let mut actions = Vec::with_capacity(horizon);
    let mut s = sample_categorical(rng, mdp.mu());
    states.push(s);
    for _ in 0..horizon {
        let a = sample_categorical(rng, policy.row(s));
        s = sample_categorical(rng, mdp.row(s, a));
        actions.push(a);
        states.push(s);
    }
    Ok(Trajectory { states, actions })
}

/// `Q(s,a) = sum_s' T(s'|s,a) (r(s') + gamma V(s'))`.
pub fn q_from_values(mdp: &TabularMdp, reward: &RewardTable, values: &[f64]) -> SaTable {
    let mut q = SaTable::zeros(mdp.n_states(), mdp.n_actions());
    for s in 0..mdp.n_states() {
        for a in 0..mdp.n_actions() {
            let v = mdp
                .row(s, a)
                .iter()
                .zip(reward.r.iter().zip(values))
                .map(|(t, (r, v))| t * (r + mdp.gamma() * v))
                .sum();
            q.set(s, a, v);
        }
    }
    q
}

/// Index of the largest entry, smallest index on ties.
pub fn argmax(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in xs.iter().enumerate().skip(1) {
        if x > xs[best] {
            best = i;
        }
    }
    best
}

/// Optimal values and a deterministic greedy policy.
///
/// Returns once `max|V_{k+1} - V_k| <= tol`; the returned `V_{k+1}` then has
/// Bellman residual at most `gamma * tol`.
pub fn value_iteration(
    mdp: &TabularMdp,
    reward: &RewardTable,
    tol: f64,
) -> Result<(Vec<f64>, StochasticPolicy)> {
    if !(tol > 0.0) {
        return Err(Error::InvalidArgument("tolerance must be positive".into()));
    }
    mdp.check_reward(reward)?;
    let mut v = vec![0.0; mdp.n_states()];
    loop {
        let q = q_from_values(mdp, reward, &v);
        let next: Vec<f64> = (0..mdp.n_states())
            .map(|s| q.row(s).iter().copied().fold(f64::NEG_INFINITY, f64::max))
            .collect();
        let delta = next
            .iter()
            .zip(&v)
            .fold(0.0_f64, |m, (a, b)| m.max((a - b).abs()));
        v = next;
        if !delta.is_finite() {
            return Err(Error::NonFinite);
        }
        if delta <= tol {
            break;
        }
    }
    let q = q_from_values(mdp, reward, &v);
    let greedy: Vec<usize> = (0..mdp.n_states()).map(|s| argmax(q.row(s))).collect();
    Ok((v, StochasticPolicy::deterministic(mdp.n_actions(), &greedy)?))
}

/// Row-wise softmax of `q / temperature`.
pub fn softmax_policy(q: &SaTable, temperature: f64) -> Result<StochasticPolicy> {
    if !(temperature > 0.0) {
        return Err(Error::InvalidArgument("temperature must be positive".into()));
    }
    if q.values.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite);
    }
    let mut probs = Vec::with_capacity(q.values.len());
    for s in 0..q.n_states {
        probs.extend(softmax(q.row(s), temperature));
    }
    StochasticPolicy::new(q.n_states, q.n_actions, probs)
}

pub(crate) fn softmax(scores: &[f64], temperature: f64) -> Vec<f64> {
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut out: Vec<f64> = scores
        .iter()
        .map(|x| ((x - max) / temperature).exp())
        .collect();
    let total: f64 = out.iter().sum();
    for p in &mut out {
        *p /= total;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn single_state(gamma: f64) -> TabularMdp {
        TabularMdp::new(1, 1, vec![1.0], vec![1.0], gamma).unwrap()
    }

    /// `T[s][a]` moves to `s + 1 mod n` for every action.
    fn cycle(n: usize, n_actions: usize) -> TabularMdp {
        let mut kernel = vec![0.0; n * n_actions * n];
        for s in 0..n {
            for a in 0..n_actions {
                kernel[(s * n_actions + a) * n + (s + 1) % n] = 1.0;
            }
        }
        let mut mu = vec![0.0; n];
        mu[0] = 1.0;
        TabularMdp::new(n, n_actions, kernel, mu, 0.9).unwrap()
    }

    #[test]
    fn validate_accepts_identity_case() {
        assert!(validate_mdp(&single_state(0.5)).is_ok());
    }

    #[test]
    fn validate_rejects_short_row() {
        let err = TabularMdp::new(2, 1, vec![0.5, 0.4, 0.0, 1.0], vec![1.0, 0.0], 0.5);
        assert!(matches!(err, Err(Error::NonStochasticRow { state: 0, action: 0, .. })));
    }

    #[test]
    fn validate_rejects_discount_one() {
        assert!(matches!(
            TabularMdp::new(1, 1, vec![1.0], vec![1.0], 1.0),
            Err(Error::BadDiscount(_))
        ));
    }

    #[test]
    fn rollout_cycles_on_deterministic_chain() {
        let mdp = cycle(4, 2);
        let traj = rollout(&mdp, &StochasticPolicy::uniform(4, 2), 3, RngSeed(1)).unwrap();
        assert_eq!(traj.states, vec![0, 1, 2, 3]);
        assert_eq!(traj.len(), 3);
    }

    #[test]
    fn rollout_rejects_zero_horizon() {
        let mdp = cycle(3, 1);
        assert!(rollout(&mdp, &StochasticPolicy::uniform(3, 1), 0, RngSeed(0)).is_err());
    }

    #[test]
    fn rollout_rejects_shape_mismatch() {
        let mdp = cycle(3, 1);
        assert!(matches!(
            rollout(&mdp, &StochasticPolicy::uniform(3, 2), 2, RngSeed(0)),
            Err(Error::DimensionMismatch(_))
        ));
    }

    #[test]
    fn rollout_is_deterministic_per_seed() {
        let mdp = TabularMdp::new(
            2,
            2,
            vec![0.3, 0.7, 0.6, 0.4, 0.5, 0.5, 0.9, 0.1],
            vec![0.5, 0.5],
            0.9,
        )
        .unwrap();
        let pi = StochasticPolicy::uniform(2, 2);
        let a = rollout(&mdp, &pi, 10, RngSeed(7)).unwrap();
        let b = rollout(&mdp, &pi, 10, RngSeed(7)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn value_iteration_geometric_series() {
        let mdp = single_state(0.5);
        let reward = RewardTable::constant("one", 1, 1.0);
        let (v, _) = value_iteration(&mdp, &reward, 1e-12).unwrap();
        assert_abs_diff_eq!(v[0], 2.0, epsilon = 1e-10);
    }

    #[test]
    fn value_iteration_zero_reward_ties_to_action_zero() {
        let mdp = cycle(3, 3);
        let reward = RewardTable::constant("zero", 3, 0.0);
        let (v, pi) = value_iteration(&mdp, &reward, 1e-9).unwrap();
        assert!(v.iter().all(|&x| x == 0.0));
        for s in 0..3 {
            assert_eq!(pi.row(s), &[1.0, 0.0, 0.0]);
        }
    }

    #[test]
    fn value_iteration_residual_within_tolerance() {
        let mdp = TabularMdp::new(
            2,
            2,
            vec![0.3, 0.7, 0.6, 0.4, 0.5, 0.5, 0.9, 0.1],
            vec![0.5, 0.5],
            0.95,
        )
        .unwrap();
        let reward = RewardTable::new("r", vec![0.2, 1.0]).unwrap();
        let tol = 1e-8;
        let (v, _) = value_iteration(&mdp, &reward, tol).unwrap();
        let q = q_from_values(&mdp, &reward, &v);
        for s in 0..2 {
            let backup = q.row(s).iter().copied().fold(f64::NEG_INFINITY, f64::max);
            assert!((backup - v[s]).abs() <= tol);
        }
    }

    #[test]
    fn softmax_cases() {
        let flat = SaTable {
            n_states: 1,
            n_actions: 3,
            values: vec![2.0; 3],
        };
        let pi = softmax_policy(&flat, 0.7).unwrap();
        for &p in pi.row(0) {
            assert_abs_diff_eq!(p, 1.0 / 3.0, epsilon = 1e-15);
        }

        let analytic = SaTable {
            n_states: 1,
            n_actions: 2,
            values: vec![0.0, 3.0_f64.ln()],
        };
        let pi = softmax_policy(&analytic, 1.0).unwrap();
        assert_abs_diff_eq!(pi.prob(0, 0), 0.25, epsilon = 1e-15);
        assert_abs_diff_eq!(pi.prob(0, 1), 0.75, epsilon = 1e-15);

        let sharp = SaTable {
            n_states: 1,
            n_actions: 3,
            values: vec![0.1, 0.3, 0.2],
        };
        let pi = softmax_policy(&sharp, 0.01).unwrap();
        assert!(pi.prob(0, 1) >= 0.99);

        let bad = SaTable {
            n_states: 1,
            n_actions: 2,
            values: vec![0.0, f64::NAN],
        };
        assert!(matches!(softmax_policy(&bad, 1.0), Err(Error::NonFinite)));
    }

    #[test]
    fn json_round_trip() {
        let mdp = cycle(3, 2);
        let text = mdp.to_json().unwrap();
        assert!(text.contains("\"kernel\":[[["));
        assert_eq!(TabularMdp::from_json(&text).unwrap(), mdp);
    }
}
