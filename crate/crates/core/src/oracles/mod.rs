//! Brute-force verifiers for the occupancy bounds, the dual forms and the
//! gradient code.
//!
//! Oracles recompute what they check with their own arithmetic: a small
//! Gaussian elimination for occupancies, direct formulas for the divergence
//! generator and greedy or grid search for the inner problems.

use rand::Rng;
use rand_distr::{Distribution, Exp1};
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::mdp::{StochasticPolicy, TabularMdp};

mod duality;
mod gradients;
mod lemmas;
mod props;
mod suite;
mod tv;

pub use duality::{check_heavy_duality_gap, duality_gap_suite, DualityGapConfig};
pub use gradients::{check_fb_gradients, check_heavy_gradients};
pub use lemmas::{check_lemma_sa, check_lemma_state, check_lemma_triple, lemma_suite, LemmaKind};
pub use props::{
    check_bellman_flow, check_prop1_duality, check_prop2_interval, check_prop3_closed_form,
    check_softtv_identities,
};
pub use suite::{duality_checks, lemma_checks, prop_checks, run_suite, Suite};
pub use tv::{random_kernel_in_tv_ball, tv_worstcase_primal};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub trial: usize,
    pub violation: f64,
    pub observed: f64,
    pub reference: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckReport {
    pub name: String,
    pub trials: usize,
    pub tolerance: f64,
    pub max_violation: f64,
    pub passed: bool,
    pub details: Vec<TrialRecord>,
}

impl CheckReport {
    /// `passed` holds exactly when every violation is within `tolerance`.
    pub fn from_records(name: impl Into<String>, tolerance: f64, details: Vec<TrialRecord>) -> Self {
        let max_violation = details
            .iter()
            .map(|r| r.violation)
            .fold(f64::NEG_INFINITY, |m, v| if v.is_nan() { f64::INFINITY } else { m.max(v) });
        let max_violation = if details.is_empty() { 0.0 } else { max_violation };
        Self {
            name: name.into(),
            trials: details.len(),
            tolerance,
            max_violation,
            passed: max_violation <= tolerance,
            details,
        }
    }

    /// Concatenates reports of the same check, renumbering trials.
    pub fn merge(name: impl Into<String>, tolerance: f64, reports: Vec<CheckReport>) -> Self {
        let details = reports
            .into_iter()
            .flat_map(|r| r.details)
            .enumerate()
            .map(|(i, mut r)| {
                r.trial = i;
                r
            })
            .collect();
        Self::from_records(name, tolerance, details)
    }

    pub fn summary_line(&self) -> String {
        format!(
            "{:<28} {:>6} trials  max_violation {:>12.3e}  tol {:>9.1e}  {}",
            self.name,
            self.trials,
            self.max_violation,
            self.tolerance,
            if self.passed { "PASS" } else { "FAIL" }
        )
    }
}

/// Uniform draw from the probability simplex.
pub fn random_simplex<R: Rng + ?Sized>(rng: &mut R, n: usize) -> Vec<f64> {
    let mut v: Vec<f64> = (0..n).map(|_| Exp1.sample(rng)).collect();
    let total: f64 = v.iter().sum();
    v.iter_mut().for_each(|x| *x /= total);
    v
}

/// Random MDP with Dirichlet(1) kernel rows and initial distribution.
pub fn random_mdp<R: Rng + ?Sized>(
    rng: &mut R,
    n_states: usize,
    n_actions: usize,
    gamma: f64,
) -> Result<TabularMdp> {
    let mut kernel = Vec::with_capacity(n_states * n_actions * n_states);
    for _ in 0..n_states * n_actions {
        kernel.extend(random_simplex(rng, n_states));
    }
    let mu = random_simplex(rng, n_states);
    TabularMdp::new(n_states, n_actions, kernel, mu, gamma)
}

pub fn random_policy<R: Rng + ?Sized>(
    rng: &mut R,
    n_states: usize,
    n_actions: usize,
) -> Result<StochasticPolicy> {
    let mut probs = Vec::with_capacity(n_states * n_actions);
    for _ in 0..n_states {
        probs.extend(random_simplex(rng, n_actions));
    }
    StochasticPolicy::new(n_states, n_actions, probs)
}

/// Solves `a x = b` for a dense row-major `n x n` matrix by Gaussian
/// elimination with partial pivoting.
pub(crate) fn solve_dense(mut a: Vec<f64>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    for col in 0..n {
        let pivot = (col..n).max_by(|&i, &j| a[i * n + col].abs().total_cmp(&a[j * n + col].abs()))?;
        if a[pivot * n + col].abs() < 1e-300 {
            return None;
        }
        if pivot != col {
            for k in 0..n {
                a.swap(col * n + k, pivot * n + k);
            }
            b.swap(col, pivot);
        }
        for row in col + 1..n {
            let factor = a[row * n + col] / a[col * n + col];
            if factor == 0.0 {
                continue;
            }
            for k in col..n {
                a[row * n + k] -= factor * a[col * n + k];
            }
            b[row] -= factor * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let tail: f64 = (row + 1..n).map(|k| a[row * n + k] * x[k]).sum();
        x[row] = (b[row] - tail) / a[row * n + row];
    }
    Some(x)
}

/// `(s, a, s')` occupancy of `policy` under `mdp`, flattened, computed from
/// `rho = (1-gamma) mu + gamma P_pi^T rho`.
pub(crate) fn oracle_triple(mdp: &TabularMdp, policy: &StochasticPolicy) -> Option<Vec<f64>> {
    let (ns, na, g) = (mdp.n_states(), mdp.n_actions(), mdp.gamma());
    let mut m = vec![0.0; ns * ns];
    for i in 0..ns {
        m[i * ns + i] = 1.0;
    }
    for s in 0..ns {
        for a in 0..na {
            let p = policy.prob(s, a);
            for (t, &k) in mdp.row(s, a).iter().enumerate() {
                // row t of (I - gamma P^T) picks up P[s][t]
                m[t * ns + s] -= g * p * k;
            }
        }
    }
    let rhs: Vec<f64> = mdp.mu().iter().map(|x| (1.0 - g) * x).collect();
    let rho = solve_dense(m, rhs)?;
    let mut out = Vec::with_capacity(ns * na * ns);
    for s in 0..ns {
        for a in 0..na {
            let w = rho[s] * policy.prob(s, a);
            out.extend(mdp.row(s, a).iter().map(|k| w * k));
        }
    }
    Some(out)
}

pub(crate) fn half_l1(p: &[f64], q: &[f64]) -> f64 {
    0.5 * p.iter().zip(q).map(|(x, y)| (x - y).abs()).sum::<f64>()
}
