use rand::Rng;

use crate::error::Result;
use crate::fb::{Transition, TransitionDataset};
use crate::inference::ExpertDataset;
use crate::mdp::{
    q_from_values, rollout_with, softmax_policy, value_iteration, RewardTable, StochasticPolicy,
    TabularMdp,
};

/// Flattened uniform-policy rollouts of length `horizon`, truncated to
/// exactly `n_transitions` items.
pub fn generate_exploratory_dataset<R: Rng + ?Sized>(
    mdp: &TabularMdp,
    n_transitions: usize,
    horizon: usize,
    rng: &mut R,
) -> Result<TransitionDataset> {
    let policy = StochasticPolicy::uniform(mdp.n_states(), mdp.n_actions());
    let mut transitions = Vec::with_capacity(n_transitions);
    while transitions.len() < n_transitions {
        let traj = rollout_with(mdp, &policy, horizon.max(1), rng)?;
        for (s, a, s_next) in traj.transitions() {
            if transitions.len() == n_transitions {
                break;
            }
            transitions.push(Transition { s, a, s_next });
        }
    }
    let dataset = TransitionDataset {
        n_states: mdp.n_states(),
        n_actions: mdp.n_actions(),
        transitions,
    };
    if n_transitions > 0 {
        let missing = dataset.unvisited_pairs().len();
        if missing > 0 {
            log::warn!("exploratory dataset leaves {missing} state-action pairs unvisited");
        }
    }
    Ok(dataset)
}

/// Softmax policy over optimal `Q` at `temperature`.
pub fn expert_policy(mdp: &TabularMdp, reward: &RewardTable, temperature: f64) -> Result<StochasticPolicy> {
    let (v, _) = value_iteration(mdp, reward, 1e-10)?;
    softmax_policy(&q_from_values(mdp, reward, &v), temperature)
}

/// `n_traj` rollouts of the value-iteration softmax expert.
pub fn generate_expert<R: Rng + ?Sized>(
    mdp: &TabularMdp,
    reward: &RewardTable,
    n_traj: usize,
    horizon: usize,
    expert_temperature: f64,
    rng: &mut R,
) -> Result<ExpertDataset> {
    let policy = expert_policy(mdp, reward, expert_temperature)?;
    rollouts_of(mdp, &policy, n_traj, horizon, rng)
}

pub(crate) fn rollouts_of<R: Rng + ?Sized>(
    mdp: &TabularMdp,
    policy: &StochasticPolicy,
    n_traj: usize,
    horizon: usize,
    rng: &mut R,
) -> Result<ExpertDataset> {
    let trajectories = (0..n_traj)
        .map(|_| rollout_with(mdp, policy, horizon, rng))
        .collect::<Result<Vec<_>>>()?;
    ExpertDataset::from_trajectories(mdp.n_states(), mdp.n_actions(), trajectories)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::{build_env, EnvSpec};
    use crate::rng::RngSeed;

    #[test]
    fn exploratory_counts_and_coverage() {
        let (mdp, _) = build_env(&EnvSpec::chain(5, 0.0)).unwrap();
        let mut rng = RngSeed(1).rng();
        assert!(generate_exploratory_dataset(&mdp, 0, 10, &mut rng).unwrap().is_empty());
        let data = generate_exploratory_dataset(&mdp, 10_000, 50, &mut rng).unwrap();
        assert_eq!(data.len(), 10_000);
        assert!(data.unvisited_pairs().is_empty());
        let again = generate_exploratory_dataset(&mdp, 777, 13, &mut RngSeed(4).rng()).unwrap();
        let other = generate_exploratory_dataset(&mdp, 777, 13, &mut RngSeed(4).rng()).unwrap();
        assert_eq!(again.transitions, other.transitions);
    }

    #[test]
    fn cold_expert_on_deterministic_chain_repeats_itself() {
        let (mdp, tasks) = build_env(&EnvSpec::chain(7, 0.0)).unwrap();
        let expert =
            generate_expert(&mdp, &tasks["right_end"], 4, 12, 1e-4, &mut RngSeed(2).rng()).unwrap();
        let trajs = expert.trajectories();
        assert_eq!(trajs.len(), 4);
        assert!(trajs.iter().all(|t| t == &trajs[0]));
        assert_eq!(*trajs[0].states.last().unwrap(), 6);
    }
}
