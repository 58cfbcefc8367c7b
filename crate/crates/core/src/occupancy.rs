//! Exact discounted occupancies, successor measures and flow residuals.
//!
//! Occupancies carry the `(1 - gamma)` normalization and are probability
//! distributions. The successor measure does not and has row mass
//! `1 / (1 - gamma)`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mdp::{RewardTable, SaTable, StochasticPolicy, TabularMdp};

const DIST_TOL: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StateOccupancy {
    pub rho: Vec<f64>,
}

/// `rho(s, a, s')` over a whole MDP, stored flat as `[(s * A + a) * S + s']`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OccupancyTriple {
    pub n_states: usize,
    pub n_actions: usize,
    pub rho3: Vec<f64>,
}

impl OccupancyTriple {
    pub fn new(n_states: usize, n_actions: usize, rho3: Vec<f64>) -> Result<Self> {
        if rho3.len() != n_states * n_actions * n_states {
            return Err(Error::DimensionMismatch(format!(
                "triple has {} entries, expected {}",
                rho3.len(),
                n_states * n_actions * n_states
            )));
        }
        Ok(Self {
            n_states,
            n_actions,
            rho3,
        })
    }

    pub fn get(&self, s: usize, a: usize, s_next: usize) -> f64 {
        self.rho3[(s * self.n_actions + a) * self.n_states + s_next]
    }

    /// `rho(s, a) = sum_s' rho(s, a, s')`.
    pub fn rho2(&self) -> SaTable {
        let mut out = SaTable::zeros(self.n_states, self.n_actions);
        for (i, chunk) in self.rho3.chunks(self.n_states).enumerate() {
            out.values[i] = chunk.iter().sum();
        }
        out
    }

    /// `rho(s) = sum_{a, s'} rho(s, a, s')`.
    pub fn rho1(&self) -> Vec<f64> {
        let rho2 = self.rho2();
        (0..self.n_states).map(|s| rho2.row(s).iter().sum()).collect()
    }

    /// Inflow `sum_{s~, a~} rho(s~, a~, s)` per state.
    pub fn inflow(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.n_states];
        for chunk in self.rho3.chunks(self.n_states) {
            for (o, &x) in out.iter_mut().zip(chunk) {
                *o += x;
            }
        }
        out
    }

    pub fn total_mass(&self) -> f64 {
        self.rho3.iter().sum()
    }
}

/// `M(s'|s, a)`, unnormalized discounted next-state visitation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SuccessorMeasure {
    pub n_states: usize,
    pub n_actions: usize,
    pub gamma: f64,
    pub m: Vec<f64>,
}

impl SuccessorMeasure {
    pub fn row(&self, s: usize, a: usize) -> &[f64] {
        let start = (s * self.n_actions + a) * self.n_states;
        &self.m[start..start + self.n_states]
    }
}

/// `(I - gamma P_pi)` as a dense matrix.
fn resolvent_system(mdp: &TabularMdp, policy: &StochasticPolicy) -> Result<DMatrix<f64>> {
    let n = mdp.n_states();
    let p = mdp.policy_transition(policy)?;
    let gamma = mdp.gamma();
    Ok(DMatrix::from_fn(n, n, |i, j| {
        let id = if i == j { 1.0 } else { 0.0 };
        id - gamma * p[i * n + j]
    }))
}

/// Solves `rho = (1 - gamma) mu + gamma P_pi^T rho` directly.
pub fn state_occupancy(mdp: &TabularMdp, policy: &StochasticPolicy) -> Result<StateOccupancy> {
    let system = resolvent_system(mdp, policy)?.transpose();
    let rhs = DVector::from_iterator(
        mdp.n_states(),
        mdp.mu().iter().map(|m| (1.0 - mdp.gamma()) * m),
    );
    let sol = system.lu().solve(&rhs).ok_or(Error::SingularSystem)?;
    Ok(StateOccupancy {
        rho: sol.iter().copied().collect(),
    })
}

/// `rho(s, a, s') = rho(s) pi(a|s) T(s'|s, a)`.
pub fn triple_occupancy(mdp: &TabularMdp, policy: &StochasticPolicy) -> Result<OccupancyTriple> {
    let rho1 = state_occupancy(mdp, policy)?.rho;
    let (n, na) = (mdp.n_states(), mdp.n_actions());
    let mut rho3 = vec![0.0; n * na * n];
    for s in 0..n {
        for a in 0..na {
            let w = rho1[s] * policy.prob(s, a);
            let start = (s * na + a) * n;
            for (dst, &t) in rho3[start..start + n].iter_mut().zip(mdp.row(s, a)) {
                *dst = w * t;
            }
        }
    }
    OccupancyTriple::new(n, na, rho3)
}

/// `M(.|s, a) = T(.|s, a) (I - gamma P_pi)^{-1}`.
pub fn successor_measure(mdp: &TabularMdp, policy: &StochasticPolicy) -> Result<SuccessorMeasure> {
    let (n, na) = (mdp.n_states(), mdp.n_actions());
    let resolvent = resolvent_system(mdp, policy)?
        .try_inverse()
        .ok_or(Error::SingularSystem)?;
    let mut m = vec![0.0; n * na * n];
    for s in 0..n {
        for a in 0..na {
            let row = mdp.row(s, a);
            let start = (s * na + a) * n;
            for (j, dst) in m[start..start + n].iter_mut().enumerate() {
                *dst = row.iter().enumerate().map(|(k, t)| t * resolvent[(k, j)]).sum();
            }
        }
    }
    Ok(SuccessorMeasure {
        n_states: n,
        n_actions: na,
        gamma: mdp.gamma(),
        m,
    })
}

/// `Q(s, a) = sum_s' M(s'|s, a) r(s')`.
pub fn q_from_successor(m: &SuccessorMeasure, reward: &RewardTable) -> Result<SaTable> {
    if reward.r.len() != m.n_states {
        return Err(Error::DimensionMismatch(
            "reward and successor measure disagree on state count".into(),
        ));
    }
    let mut q = SaTable::zeros(m.n_states, m.n_actions);
    for s in 0..m.n_states {
        for a in 0..m.n_actions {
            q.set(s, a, m.row(s, a).iter().zip(&reward.r).map(|(x, r)| x * r).sum());
        }
    }
    Ok(q)
}

/// Exact `V^pi` and `Q^pi` for next-state rewards by one linear solve.
pub fn policy_evaluation(
    mdp: &TabularMdp,
    policy: &StochasticPolicy,
    reward: &RewardTable,
) -> Result<(Vec<f64>, SaTable)> {
    mdp.check_reward(reward)?;
    let n = mdp.n_states();
    let expected_reward = DVector::from_fn(n, |s, _| {
        (0..mdp.n_actions())
            .map(|a| {
                policy.prob(s, a)
                    * mdp.row(s, a).iter().zip(&reward.r).map(|(t, r)| t * r).sum::<f64>()
            })
            .sum()
    });
    let v = resolvent_system(mdp, policy)?
        .lu()
        .solve(&expected_reward)
        .ok_or(Error::SingularSystem)?;
    let v: Vec<f64> = v.iter().copied().collect();
    let q = crate::mdp::q_from_values(mdp, reward, &v);
    Ok((v, q))
}

fn is_distribution(p: &[f64]) -> bool {
    p.iter().all(|&x| x >= 0.0) && (p.iter().sum::<f64>() - 1.0).abs() <= DIST_TOL
}

/// Total variation `0.5 * sum |p - q|`.
pub fn tv_distance(p: &[f64], q: &[f64]) -> Result<f64> {
    if p.len() != q.len() {
        return Err(Error::DimensionMismatch("supports differ in size".into()));
    }
    if !is_distribution(p) || !is_distribution(q) {
        return Err(Error::NotDistribution);
    }
    Ok(0.5 * p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum::<f64>())
}

/// Bellman-flow residual of `rho3` for the expert policy:
/// `sum_s' rho(s,a,s') - (1-gamma) mu(s) pi(a|s) - gamma pi(a|s) inflow(s)`.
pub fn bellman_flow_residual(
    rho3: &OccupancyTriple,
    mdp: &TabularMdp,
    expert: &StochasticPolicy,
) -> Result<SaTable> {
    if rho3.n_states != mdp.n_states() || rho3.n_actions != mdp.n_actions() {
        return Err(Error::DimensionMismatch(
            "occupancy and MDP shapes differ".into(),
        ));
    }
    mdp.check_policy(expert)?;
    let gamma = mdp.gamma();
    let inflow = rho3.inflow();
    let mut out = rho3.rho2();
    for s in 0..mdp.n_states() {
        for a in 0..mdp.n_actions() {
            let pi = expert.prob(s, a);
            let idx = s * mdp.n_actions() + a;
            out.values[idx] -= (1.0 - gamma) * mdp.mu()[s] * pi + gamma * pi * inflow[s];
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mdp::rollout_with;
    use crate::rng::RngSeed;
    use approx::assert_abs_diff_eq;
    use rand::Rng;

    fn random_mdp(n: usize, na: usize, gamma: f64, seed: u64) -> TabularMdp {
        let mut rng = RngSeed(seed).rng();
        let mut kernel = Vec::new();
        for _ in 0..n * na {
            let row: Vec<f64> = (0..n).map(|_| rng.random::<f64>() + 0.01).collect();
            let total: f64 = row.iter().sum();
            kernel.extend(row.iter().map(|x| x / total));
        }
        let mu: Vec<f64> = (0..n).map(|_| rng.random::<f64>() + 0.01).collect();
        let total: f64 = mu.iter().sum();
        let mu = mu.iter().map(|x| x / total).collect();
        TabularMdp::new(n, na, kernel, mu, gamma).unwrap()
    }

    fn random_policy(n: usize, na: usize, seed: u64) -> StochasticPolicy {
        let mut rng = RngSeed(seed).rng();
        let mut probs = Vec::new();
        for _ in 0..n {
            let row: Vec<f64> = (0..na).map(|_| rng.random::<f64>() + 0.05).collect();
            let total: f64 = row.iter().sum();
            probs.extend(row.iter().map(|x| x / total));
        }
        StochasticPolicy::new(n, na, probs).unwrap()
    }

    #[test]
    fn single_state_occupancy() {
        let mdp = TabularMdp::new(1, 1, vec![1.0], vec![1.0], 0.5).unwrap();
        let pi = StochasticPolicy::uniform(1, 1);
        assert_eq!(state_occupancy(&mdp, &pi).unwrap().rho, vec![1.0]);
        assert_eq!(triple_occupancy(&mdp, &pi).unwrap().rho3, vec![1.0]);
        let m = successor_measure(&mdp, &pi).unwrap();
        assert_abs_diff_eq!(m.m[0], 2.0, epsilon = 1e-14);
        let triple = OccupancyTriple::new(1, 1, vec![1.0]).unwrap();
        let res = bellman_flow_residual(&triple, &mdp, &pi).unwrap();
        assert_abs_diff_eq!(res.values[0], 0.0, epsilon = 1e-15);
    }

    #[test]
    fn absorbing_two_state_occupancy() {
        let mdp = TabularMdp::new(2, 1, vec![0.0, 1.0, 0.0, 1.0], vec![1.0, 0.0], 0.5).unwrap();
        let rho = state_occupancy(&mdp, &StochasticPolicy::uniform(2, 1)).unwrap().rho;
        assert_abs_diff_eq!(rho[0], 0.5, epsilon = 1e-14);
        assert_abs_diff_eq!(rho[1], 0.5, epsilon = 1e-14);
    }

    #[test]
    fn occupancy_matches_monte_carlo() {
        let mdp = random_mdp(5, 2, 0.8, 11);
        let pi = random_policy(5, 2, 12);
        let exact = state_occupancy(&mdp, &pi).unwrap().rho;
        // Each state is counted with weight (1 - gamma) gamma^t; horizon 60
        // leaves 0.8^60 ~ 1.5e-6 of mass untracked.
        let mut rng = RngSeed(13).rng();
        let mut counts = vec![0.0; 5];
        let horizon = 60;
        let episodes = 1_000_000 / horizon;
        for _ in 0..episodes {
            let traj = rollout_with(&mdp, &pi, horizon, &mut rng).unwrap();
            let mut w = 1.0 - mdp.gamma();
            for &s in &traj.states[..horizon] {
                counts[s] += w;
                w *= mdp.gamma();
            }
        }
        let total: f64 = counts.iter().sum();
        let mc: Vec<f64> = counts.iter().map(|c| c / total).collect();
        assert!(tv_distance(&exact, &mc).unwrap() < 0.01);
    }

    #[test]
    fn triple_marginals_agree_with_state_occupancy() {
        let mdp = random_mdp(4, 3, 0.9, 3);
        let pi = random_policy(4, 3, 4);
        let rho = state_occupancy(&mdp, &pi).unwrap().rho;
        let triple = triple_occupancy(&mdp, &pi).unwrap();
        for (a, b) in triple.rho1().iter().zip(&rho) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-12);
        }
        assert_abs_diff_eq!(triple.total_mass(), 1.0, epsilon = 1e-9);
    }

    #[test]
    fn flow_residual_vanishes_for_exact_triple() {
        let mdp = random_mdp(4, 2, 0.95, 5);
        let pi = random_policy(4, 2, 6);
        let triple = triple_occupancy(&mdp, &pi).unwrap();
        let res = bellman_flow_residual(&triple, &mdp, &pi).unwrap();
        assert!(res.sup_norm() <= 1e-9);
    }

    #[test]
    fn flow_residual_detects_uniform_triple() {
        // A point-mass start makes the uniform triple violate the flow.
        let mut mu = vec![0.0; 4];
        mu[0] = 1.0;
        let base = random_mdp(4, 2, 0.9, 8);
        let mdp = TabularMdp::new(4, 2, base.kernel().to_vec(), mu, 0.9).unwrap();
        let pi = random_policy(4, 2, 9);
        let uniform = OccupancyTriple::new(4, 2, vec![1.0 / 32.0; 32]).unwrap();
        let res = bellman_flow_residual(&uniform, &mdp, &pi).unwrap();
        assert!(res.sup_norm() > 1e-3);
    }

    #[test]
    fn successor_rows_have_discounted_mass() {
        let mdp = random_mdp(5, 3, 0.97, 21);
        let pi = random_policy(5, 3, 22);
        let m = successor_measure(&mdp, &pi).unwrap();
        for s in 0..5 {
            for a in 0..3 {
                let mass: f64 = m.row(s, a).iter().sum();
                assert_abs_diff_eq!(mass, 1.0 / (1.0 - 0.97), epsilon = 1e-8);
                assert!(m.row(s, a).iter().all(|&x| x >= 0.0));
            }
        }
    }

    #[test]
    fn successor_at_tiny_discount_is_kernel() {
        let mdp = random_mdp(3, 2, 1e-12, 2).with_gamma(1e-12).unwrap();
        let pi = random_policy(3, 2, 1);
        let m = successor_measure(&mdp, &pi).unwrap();
        for (x, t) in m.m.iter().zip(mdp.kernel()) {
            assert_abs_diff_eq!(x, t, epsilon = 1e-11);
        }
    }

    #[test]
    fn q_from_successor_matches_policy_evaluation() {
        let mdp = random_mdp(4, 2, 0.9, 31);
        let pi = random_policy(4, 2, 32);
        let reward = RewardTable::new("r", vec![0.3, -1.0, 2.0, 0.5]).unwrap();
        let m = successor_measure(&mdp, &pi).unwrap();
        let q = q_from_successor(&m, &reward).unwrap();
        let (_, q_ref) = policy_evaluation(&mdp, &pi, &reward).unwrap();
        for (a, b) in q.values.iter().zip(&q_ref.values) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-8);
        }
        let zero = q_from_successor(&m, &RewardTable::constant("0", 4, 0.0)).unwrap();
        assert!(zero.values.iter().all(|&x| x == 0.0));
        let one = q_from_successor(&m, &RewardTable::constant("1", 4, 1.0)).unwrap();
        for x in one.values {
            assert_abs_diff_eq!(x, 10.0, epsilon = 1e-9);
        }
    }

    #[test]
    fn tv_distance_cases() {
        assert_eq!(tv_distance(&[0.2, 0.8], &[0.2, 0.8]).unwrap(), 0.0);
        assert_eq!(tv_distance(&[1.0, 0.0], &[0.0, 1.0]).unwrap(), 1.0);
        assert_abs_diff_eq!(
            tv_distance(&[0.7, 0.3], &[0.5, 0.5]).unwrap(),
            0.2,
            epsilon = 1e-15
        );
        assert!(matches!(
            tv_distance(&[0.7, 0.7], &[0.5, 0.5]),
            Err(Error::NotDistribution)
        ));
    }
}
