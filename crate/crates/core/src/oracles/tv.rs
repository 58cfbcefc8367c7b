use rand::Rng;

use super::{half_l1, random_simplex};
use crate::error::{Error, Result};
use crate::mdp::TabularMdp;

/// Largest `E_q[losses]` over distributions `q` within TV `eps` of `p`.
///
/// Greedy: up to `eps` mass leaves the lowest-loss entries first and lands
/// on the highest-loss entry (first index on ties).
pub fn tv_worstcase_primal(p: &[f64], losses: &[f64], eps: f64) -> f64 {
    let top = losses
        .iter()
        .enumerate()
        .fold(0, |best, (i, &l)| if l > losses[best] { i } else { best });
    let mut q = p.to_vec();
    let mut budget = eps.min(1.0 - p[top]).max(0.0);
    let mut order: Vec<usize> = (0..p.len()).filter(|&i| i != top).collect();
    order.sort_by(|&i, &j| losses[i].total_cmp(&losses[j]).then(i.cmp(&j)));
    for i in order {
        if budget <= 0.0 {
            break;
        }
        let moved = q[i].min(budget);
        q[i] -= moved;
        q[top] += moved;
        budget -= moved;
    }
    q.iter().zip(losses).map(|(a, b)| a * b).sum()
}

/// Random kernel whose every row lies within TV `eps_prime` of the nominal
/// row.
///
/// Each row moves toward a Dirichlet(1) target until its TV distance from
/// the nominal row is `u * eps_prime`, `u ~ U(0,1)` (or as far as the target
/// allows).
pub fn random_kernel_in_tv_ball<R: Rng + ?Sized>(
    mdp: &TabularMdp,
    eps_prime: f64,
    rng: &mut R,
) -> Result<TabularMdp> {
    if !(0.0..=1.0).contains(&eps_prime) {
        return Err(Error::BadMagnitude {
            mode: "tv_adversarial".into(),
            magnitude: eps_prime,
        });
    }
    let ns = mdp.n_states();
    let mut kernel = Vec::with_capacity(mdp.kernel().len());
    for s in 0..ns {
        for a in 0..mdp.n_actions() {
            let row = mdp.row(s, a);
            let target = random_simplex(rng, ns);
            let u: f64 = rng.random();
            let dist = half_l1(row, &target);
            let alpha = if dist > 0.0 { (u * eps_prime / dist).min(1.0) } else { 0.0 };
            if alpha == 0.0 {
                kernel.extend_from_slice(row);
                continue;
            }
            let mut moved: Vec<f64> = row
                .iter()
                .zip(&target)
                .map(|(p, q)| ((1.0 - alpha) * p + alpha * q).max(0.0))
                .collect();
            let total: f64 = moved.iter().sum();
            moved.iter_mut().for_each(|x| *x /= total);
            kernel.extend(moved);
        }
    }
    mdp.with_kernel(kernel)
}
