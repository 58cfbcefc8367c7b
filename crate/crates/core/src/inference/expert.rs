use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fb::{FbModel, LatentVector, Transition};
use crate::mdp::{StochasticPolicy, Trajectory};

/// Demonstrations plus the empirical statistics derived from them.
///
/// `policy_hat(s)` is the empirical action distribution at visited states and
/// uniform elsewhere; `weights(s)` is the visit frequency over states where an
/// action was taken.
#[derive(Clone, Debug, PartialEq)]
pub struct ExpertDataset {
    n_states: usize,
    n_actions: usize,
    trajectories: Vec<Trajectory>,
    policy_hat: Vec<f64>,
    weights: Vec<f64>,
    support: Vec<bool>,
    visits: Vec<usize>,
    transitions: Vec<Transition>,
}

/// JSON layout of an expert file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExpertDocument {
    pub n_states: usize,
    pub n_actions: usize,
    pub trajectories: Vec<Trajectory>,
}

impl ExpertDataset {
    pub fn from_trajectories(
        n_states: usize,
        n_actions: usize,
        trajectories: Vec<Trajectory>,
    ) -> Result<Self> {
        let mut counts = vec![0.0; n_states * n_actions];
        let mut visits = Vec::new();
        let mut transitions = Vec::new();
        for traj in &trajectories {
            if traj.states.len() != traj.actions.len() + 1 {
                return Err(Error::InvalidArgument(
                    "trajectory needs one more state than actions".into(),
                ));
            }
            if traj.states.iter().any(|&s| s >= n_states)
                || traj.actions.iter().any(|&a| a >= n_actions)
            {
                return Err(Error::DimensionMismatch("trajectory index out of range".into()));
            }
            for (s, a, s_next) in traj.transitions() {
                counts[s * n_actions + a] += 1.0;
                visits.push(s);
                transitions.push(Transition { s, a, s_next });
            }
        }
        if visits.is_empty() {
            return Err(Error::EmptyDataset);
        }
        let mut policy_hat = vec![1.0 / n_actions as f64; n_states * n_actions];
        let mut weights = vec![0.0; n_states];
        let mut support = vec![false; n_states];
        for s in 0..n_states {
            let row = &counts[s * n_actions..(s + 1) * n_actions];
            let total: f64 = row.iter().sum();
            if total > 0.0 {
                support[s] = true;
                weights[s] = total / visits.len() as f64;
                for (dst, c) in policy_hat[s * n_actions..(s + 1) * n_actions].iter_mut().zip(row) {
                    *dst = c / total;
                }
            }
        }
        Ok(Self {
            n_states,
            n_actions,
            trajectories,
            policy_hat,
            weights,
            support,
            visits,
            transitions,
        })
    }

    pub fn from_document(doc: ExpertDocument) -> Result<Self> {
        Self::from_trajectories(doc.n_states, doc.n_actions, doc.trajectories)
    }

    pub fn to_document(&self) -> ExpertDocument {
        ExpertDocument {
            n_states: self.n_states,
            n_actions: self.n_actions,
            trajectories: self.trajectories.clone(),
        }
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn trajectories(&self) -> &[Trajectory] {
        &self.trajectories
    }

    /// `pi_D(.|s)`, uniform off the expert support.
    pub fn expert_row(&self, s: usize) -> &[f64] {
        &self.policy_hat[s * self.n_actions..(s + 1) * self.n_actions]
    }

    pub fn expert_rows(&self) -> Vec<Vec<f64>> {
        (0..self.n_states).map(|s| self.expert_row(s).to_vec()).collect()
    }

    pub fn policy(&self) -> StochasticPolicy {
        StochasticPolicy::new(self.n_states, self.n_actions, self.policy_hat.clone())
            .expect("empirical rows are distributions")
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn in_support(&self, s: usize) -> bool {
        self.support[s]
    }

    /// `s_t` for every recorded transition; uniform draws follow `weights`.
    pub fn visits(&self) -> &[usize] {
        &self.visits
    }

    pub fn transitions(&self) -> &[Transition] {
        &self.transitions
    }

    pub(crate) fn check_model(&self, model: &FbModel) -> Result<()> {
        if model.n_states() != self.n_states || model.n_actions() != self.n_actions {
            return Err(Error::DimensionMismatch(
                "expert data and model disagree on state/action counts".into(),
            ));
        }
        Ok(())
    }
}

/// `z_w = E_traj[ sum_t B(s_{t+1}) / len ]`, projected to the sphere.
pub fn warm_start_z(model: &FbModel, expert: &ExpertDataset) -> Result<LatentVector> {
    expert.check_model(model)?;
    let mut acc = vec![0.0; model.d()];
    let mut used = 0usize;
    for traj in expert.trajectories.iter().filter(|t| !t.is_empty()) {
        let len = traj.len() as f64;
        for &s in &traj.states[1..] {
            for (a, b) in acc.iter_mut().zip(model.backward(s)) {
                *a += b / len;
            }
        }
        used += 1;
    }
    if used == 0 {
        return Err(Error::EmptyDataset);
    }
    LatentVector::project(acc.into_iter().map(|x| x / used as f64).collect())
}
