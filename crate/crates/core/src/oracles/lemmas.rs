use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{half_l1, oracle_triple, random_mdp, random_policy, random_kernel_in_tv_ball};
use super::{CheckReport, TrialRecord};
use crate::error::{Error, Result};
use crate::mdp::{StochasticPolicy, TabularMdp};
use crate::rng::RngSeed;

/// Which occupancy the sensitivity bound is checked on.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LemmaKind {
    State,
    StateAction,
    Triple,
}

impl LemmaKind {
    pub fn name(self) -> &'static str {
        match self {
            LemmaKind::State => "lemma_state",
            LemmaKind::StateAction => "lemma_sa",
            LemmaKind::Triple => "lemma_triple",
        }
    }

    fn bound(self, gamma: f64, eps_prime: f64) -> f64 {
        let raw = match self {
            LemmaKind::State | LemmaKind::StateAction => gamma * eps_prime / (1.0 - gamma),
            LemmaKind::Triple => eps_prime / (1.0 - gamma),
        };
        raw.min(1.0)
    }

    fn marginal(self, rho3: &[f64], ns: usize, na: usize) -> Vec<f64> {
        match self {
            LemmaKind::Triple => rho3.to_vec(),
            LemmaKind::StateAction => rho3.chunks(ns).map(|c| c.iter().sum()).collect(),
            LemmaKind::State => rho3
                .chunks(ns * na)
                .map(|c| c.iter().sum())
                .collect(),
        }
    }
}

fn check_lemma<R: Rng + ?Sized>(
    kind: LemmaKind,
    mdp: &TabularMdp,
    policy: &StochasticPolicy,
    eps_prime: f64,
    trials: usize,
    rng: &mut R,
) -> Result<CheckReport> {
    let (ns, na) = (mdp.n_states(), mdp.n_actions());
    let nominal = oracle_triple(mdp, policy).ok_or(Error::SingularSystem)?;
    let nominal = kind.marginal(&nominal, ns, na);
    let bound = kind.bound(mdp.gamma(), eps_prime);
    let mut details = Vec::with_capacity(trials);
    for trial in 0..trials.max(1) {
        let perturbed = random_kernel_in_tv_ball(mdp, eps_prime, rng)?;
        let rho = oracle_triple(&perturbed, policy).ok_or(Error::SingularSystem)?;
        let tv = half_l1(&kind.marginal(&rho, ns, na), &nominal);
        details.push(TrialRecord {
            trial,
            violation: tv - bound,
            observed: tv,
            reference: bound,
        });
    }
    Ok(CheckReport::from_records(kind.name(), 1e-9, details))
}

/// TV between state occupancies under sampled kernels in the `eps_prime`
/// ball versus `min(1, gamma eps' / (1-gamma))`.
pub fn check_lemma_state<R: Rng + ?Sized>(
    mdp: &TabularMdp,
    policy: &StochasticPolicy,
    eps_prime: f64,
    trials: usize,
    rng: &mut R,
) -> Result<CheckReport> {
    check_lemma(LemmaKind::State, mdp, policy, eps_prime, trials, rng)
}

/// State-action version; same bound as the state occupancy.
pub fn check_lemma_sa<R: Rng + ?Sized>(
    mdp: &TabularMdp,
    policy: &StochasticPolicy,
    eps_prime: f64,
    trials: usize,
    rng: &mut R,
) -> Result<CheckReport> {
    check_lemma(LemmaKind::StateAction, mdp, policy, eps_prime, trials, rng)
}

/// `(s, a, s')` version against `min(1, eps' / (1-gamma))`.
pub fn check_lemma_triple<R: Rng + ?Sized>(
    mdp: &TabularMdp,
    policy: &StochasticPolicy,
    eps_prime: f64,
    trials: usize,
    rng: &mut R,
) -> Result<CheckReport> {
    check_lemma(LemmaKind::Triple, mdp, policy, eps_prime, trials, rng)
}

/// Runs a lemma check on `instances` random MDPs (2 to 8 states, 2 to 4
/// actions, `gamma` in {0.5, 0.9, 0.98}, `eps'` in [0, 0.3]).
pub fn lemma_suite(
    kind: LemmaKind,
    instances: usize,
    trials_per_instance: usize,
    seed: RngSeed,
) -> Result<CheckReport> {
    let mut rng = seed.rng();
    let mut reports = Vec::with_capacity(instances);
    for _ in 0..instances {
        let ns = rng.random_range(2..=8);
        let na = rng.random_range(2..=4);
        let gamma = [0.5, 0.9, 0.98][rng.random_range(0..3)];
        let eps_prime = rng.random_range(0.0..=0.3);
        let mdp = random_mdp(&mut rng, ns, na, gamma)?;
        let policy = random_policy(&mut rng, ns, na)?;
        reports.push(check_lemma(kind, &mdp, &policy, eps_prime, trials_per_instance, &mut rng)?);
    }
    Ok(CheckReport::merge(kind.name(), 1e-9, reports))
}
