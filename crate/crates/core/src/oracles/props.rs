use rand::Rng;

use super::{random_mdp, random_policy, random_simplex, tv_worstcase_primal};
use super::{CheckReport, TrialRecord};
use crate::error::Result;
use crate::inference::{
    light_minimize_lambda, optimal_weight, soft_tv_f, soft_tv_fprime, soft_tv_fprime_inv,
    HeavyConfig,
};
use crate::occupancy::triple_occupancy;

fn record(trial: usize, observed: f64, reference: f64) -> TrialRecord {
    TrialRecord {
        trial,
        violation: (observed - reference).abs(),
        observed,
        reference,
    }
}

fn random_light_instance<R: Rng + ?Sized>(rng: &mut R) -> (Vec<f64>, Vec<f64>, f64) {
    let n = rng.random_range(1..=20);
    let p = random_simplex(rng, n);
    let losses = (0..n).map(|_| rng.random_range(0.0..2.0)).collect();
    let eps = rng.random_range(0.0..1.5);
    (p, losses, eps)
}

/// Exact dual minimum against the greedy worst case on random instances.
/// Trial 0 is the uniform three-point instance with losses `[1, 2, 3]`.
pub fn check_prop1_duality<R: Rng + ?Sized>(trials: usize, rng: &mut R) -> CheckReport {
    let mut details = Vec::with_capacity(trials);
    for trial in 0..trials {
        let (p, losses, eps) = if trial == 0 {
            (vec![1.0 / 3.0; 3], vec![1.0, 2.0, 3.0], 0.5)
        } else {
            random_light_instance(rng)
        };
        let (_, dual) = light_minimize_lambda(&losses, &p, eps);
        details.push(record(trial, dual, tv_worstcase_primal(&p, &losses, eps)));
    }
    CheckReport::from_records("prop1_duality", 1e-8, details)
}

fn dual_objective(p: &[f64], losses: &[f64], eps: f64, max: f64, lambda: f64) -> f64 {
    let mut v = lambda + eps * (max - lambda).max(0.0);
    for (w, l) in p.iter().zip(losses) {
        v += w * (l - lambda).max(0.0);
    }
    v
}

/// Distance from `x` to `[lo, hi]`.
fn outside(x: f64, lo: f64, hi: f64) -> f64 {
    (lo - x).max(x - hi).max(0.0)
}

/// Minimizes the dual on a grid over `[-10, 10]`, refining around the best
/// point three times. Among near-ties the point closest to `[lo, hi]` wins.
fn grid_minimize(p: &[f64], losses: &[f64], eps: f64, lo: f64, hi: f64) -> (f64, f64) {
    const POINTS: usize = 2001;
    let max = losses.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let (mut a, mut b) = (-10.0, 10.0);
    let mut best = (0.0, f64::INFINITY);
    for _ in 0..4 {
        let step = (b - a) / (POINTS - 1) as f64;
        let grid: Vec<(f64, f64)> = (0..POINTS)
            .map(|i| {
                let x = a + step * i as f64;
                (x, dual_objective(p, losses, eps, max, x))
            })
            .collect();
        let vmin = grid.iter().map(|g| g.1).fold(f64::INFINITY, f64::min);
        let slack = 1e-12 * vmin.abs().max(1.0);
        best = grid
            .iter()
            .filter(|g| g.1 <= vmin + slack)
            .copied()
            .min_by(|x, y| outside(x.0, lo, hi).total_cmp(&outside(y.0, lo, hi)))
            .unwrap_or(best);
        a = best.0 - step;
        b = best.0 + step;
    }
    best
}

/// The grid minimizer of the dual lies in `[0, (1+eps) max L]` and its value
/// matches the breakpoint solver.
pub fn check_prop2_interval<R: Rng + ?Sized>(trials: usize, rng: &mut R) -> CheckReport {
    let mut details = Vec::with_capacity(trials);
    for trial in 0..trials {
        let (p, losses, eps) = random_light_instance(rng);
        let max = losses.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let hi = (1.0 + eps) * max;
        let (lambda, value) = grid_minimize(&p, &losses, eps, 0.0, hi);
        let (_, solver) = light_minimize_lambda(&losses, &p, eps);
        details.push(TrialRecord {
            trial,
            violation: outside(lambda, 0.0, hi).max((value - solver).abs()),
            observed: value,
            reference: solver,
        });
    }
    CheckReport::from_records("prop2_interval", 1e-6, details)
}

fn generator(x: f64) -> f64 {
    0.5 * (x - 1.0).cosh().ln()
}

/// Grid argmax of `-tau f(w) + c w` over `[0, w_max]` against the closed
/// form, for `tau` in `[0.1, 5]` and `|c / tau| <= 0.45`.
pub fn check_prop3_closed_form<R: Rng + ?Sized>(
    trials: usize,
    w_max: f64,
    grid_step: f64,
    rng: &mut R,
) -> CheckReport {
    let config = HeavyConfig {
        w_max,
        ..HeavyConfig::default()
    };
    let points = (w_max / grid_step).round() as usize + 1;
    let fixed = [(0.0, 1.0), (0.2, 1.0), (-0.45, 1.0), (-0.45 * 3.0, 3.0)];
    let mut details = Vec::with_capacity(trials);
    for trial in 0..trials {
        let (c, tau) = match fixed.get(trial) {
            Some(&pair) => pair,
            None => {
                let tau = rng.random_range(0.1..=5.0);
                (rng.random_range(-0.45..=0.45) * tau, tau)
            }
        };
        let mut best = (0.0, f64::NEG_INFINITY);
        for i in 0..points {
            let w = i as f64 * grid_step;
            let v = -tau * generator(w) + c * w;
            if v > best.1 {
                best = (w, v);
            }
        }
        let closed = optimal_weight(c, tau, &config);
        details.push(TrialRecord {
            trial,
            violation: (closed - best.0).abs(),
            observed: closed,
            reference: best.0,
        });
    }
    CheckReport::from_records("prop3_closed_form", grid_step, details)
}

/// `f(1) = 0`, `(f')^-1(0) = 1`, round trips of `f'` and its inverse, and
/// `f(x) <= |x - 1| / 2` on `[0, 10]`.
pub fn check_softtv_identities() -> Result<CheckReport> {
    let mut details = vec![
        record(0, soft_tv_f(1.0), 0.0),
        record(1, soft_tv_fprime_inv(0.0)?, 1.0),
    ];
    for i in 0..=980 {
        let y = -0.49 + 0.001 * i as f64;
        details.push(record(details.len(), soft_tv_fprime(soft_tv_fprime_inv(y)?), y));
    }
    for i in 0..=300 {
        let x = 0.01 * i as f64;
        details.push(record(details.len(), soft_tv_fprime_inv(soft_tv_fprime(x))?, x));
    }
    for i in 0..=10_000 {
        let x = 0.001 * i as f64;
        let f = soft_tv_f(x);
        let tv = 0.5 * (x - 1.0).abs();
        details.push(TrialRecord {
            trial: details.len(),
            violation: f - tv,
            observed: f,
            reference: tv,
        });
    }
    Ok(CheckReport::from_records("softtv_identities", 1e-10, details))
}

/// Sup-norm flow residual of exact triple occupancies on random instances.
pub fn check_bellman_flow<R: Rng + ?Sized>(trials: usize, rng: &mut R) -> Result<CheckReport> {
    let mut details = Vec::with_capacity(trials);
    for trial in 0..trials {
        let ns = rng.random_range(2..=8);
        let na = rng.random_range(1..=4);
        let gamma = rng.random_range(0.1..0.99);
        let mdp = random_mdp(rng, ns, na, gamma)?;
        let pi = random_policy(rng, ns, na)?;
        let rho = triple_occupancy(&mdp, &pi)?;
        let mut inflow: Vec<f64> = mdp.mu().iter().map(|m| (1.0 - gamma) * m).collect();
        for s in 0..ns {
            for a in 0..na {
                for (t, x) in inflow.iter_mut().enumerate() {
                    *x += gamma * rho.get(s, a, t);
                }
            }
        }
        let mut worst: f64 = 0.0;
        for s in 0..ns {
            for a in 0..na {
                let out: f64 = (0..ns).map(|t| rho.get(s, a, t)).sum();
                worst = worst.max((out - pi.prob(s, a) * inflow[s]).abs());
            }
        }
        details.push(record(trial, worst, 0.0));
    }
    Ok(CheckReport::from_records("bellman_flow", 1e-9, details))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::RngSeed;

    #[test]
    fn quick_runs_pass() {
        let mut rng = RngSeed(5).rng();
        assert!(check_prop1_duality(50, &mut rng).passed);
        assert!(check_prop2_interval(20, &mut rng).passed);
        assert!(check_prop3_closed_form(20, 10.0, 1e-3, &mut rng).passed);
        assert!(check_softtv_identities().unwrap().passed);
        assert!(check_bellman_flow(10, &mut rng).unwrap().passed);
    }

    #[test]
    fn hand_instance_is_first() {
        let mut rng = RngSeed(0).rng();
        let r = check_prop1_duality(1, &mut rng);
        assert!((r.details[0].reference - 17.0 / 6.0).abs() < 1e-15);
    }
}
