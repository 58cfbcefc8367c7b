use rand::Rng;

use super::{random_simplex, CheckReport, TrialRecord};
use crate::error::Result;
use crate::fb::{fb_td_loss_and_grads, FbModel, FbSample};
use crate::inference::{
    heavy_losses_and_grads, HeavyBatch, HeavyConfig, HeavyDualState, InitialItem,
    WeightedTransition,
};
use crate::rng::RngSeed;

const STEP: f64 = 1e-5;

/// `|g - fd| / max(|g| + |fd|, 1e-8)` in the Euclidean norm.
fn relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let diff: Vec<f64> = analytic.iter().zip(numeric).map(|(a, b)| a - b).collect();
    norm(&diff) / (norm(analytic) + norm(numeric)).max(1e-8)
}

fn central_difference(params: &mut [f64], mut f: impl FnMut(&[f64]) -> f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(params.len());
    for k in 0..params.len() {
        let x = params[k];
        params[k] = x + STEP;
        let up = f(params);
        params[k] = x - STEP;
        let down = f(params);
        params[k] = x;
        out.push((up - down) / (2.0 * STEP));
    }
    out
}

fn tiny_model<R: Rng + ?Sized>(rng: &mut R) -> Result<FbModel> {
    let ns = rng.random_range(2..=4);
    let na = rng.random_range(2..=3);
    let d = rng.random_range(2..=4);
    let temperature = rng.random_range(0.3..1.5);
    FbModel::init(ns, na, d, temperature, RngSeed(rng.random()))
}

fn random_vector<R: Rng + ?Sized>(rng: &mut R, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
}

/// Analytic TD-loss gradients against central differences on all three
/// parameter tables of random tiny models.
pub fn check_fb_gradients<R: Rng + ?Sized>(trials: usize, rng: &mut R) -> Result<CheckReport> {
    let mut details = Vec::with_capacity(trials);
    for trial in 0..trials {
        let mut model = tiny_model(rng)?;
        // move the main tables away from the targets so both paths matter
        for x in model.theta_mut() {
            *x += rng.random_range(-0.3..0.3);
        }
        for x in model.theta0_mut() {
            *x += rng.random_range(-0.3..0.3);
        }
        let (ns, na, d) = (model.n_states(), model.n_actions(), model.d());
        let gamma = rng.random_range(0.5..0.99);
        let batch: Vec<FbSample> = (0..8)
            .map(|_| FbSample {
                s: rng.random_range(0..ns),
                a: rng.random_range(0..na),
                s_next: rng.random_range(0..ns),
                a_next: rng.random_range(0..na),
                s_plus: rng.random_range(0..ns),
                z: random_vector(rng, d),
            })
            .collect();
        let (_, grads) = fb_td_loss_and_grads(&model, gamma, &batch);

        let mut analytic = grads.theta.clone();
        analytic.extend(&grads.theta0);
        analytic.extend(&grads.b);

        let mut numeric = Vec::with_capacity(analytic.len());
        let mut theta = model.theta().to_vec();
        numeric.extend(central_difference(&mut theta, |p| {
            let mut m = model.clone();
            m.theta_mut().copy_from_slice(p);
            fb_td_loss_and_grads(&m, gamma, &batch).0
        }));
        let mut theta0 = model.theta0().to_vec();
        numeric.extend(central_difference(&mut theta0, |p| {
            let mut m = model.clone();
            m.theta0_mut().copy_from_slice(p);
            fb_td_loss_and_grads(&m, gamma, &batch).0
        }));
        let mut b = model.b().to_vec();
        numeric.extend(central_difference(&mut b, |p| {
            let mut m = model.clone();
            m.b_mut().copy_from_slice(p);
            fb_td_loss_and_grads(&m, gamma, &batch).0
        }));
        details.push(TrialRecord {
            trial,
            violation: relative_error(&analytic, &numeric),
            observed: analytic.iter().map(|x| x.abs()).fold(0.0, f64::max),
            reference: numeric.iter().map(|x| x.abs()).fold(0.0, f64::max),
        });
    }
    Ok(CheckReport::from_records("fb_gradients", 1e-3, details))
}

/// Critic gradients in `(Q, tau)` and actor gradients in `z` with the
/// weights `w` held fixed, against central differences.
pub fn check_heavy_gradients<R: Rng + ?Sized>(trials: usize, rng: &mut R) -> Result<CheckReport> {
    let mut details = Vec::with_capacity(trials);
    for trial in 0..trials {
        let model = tiny_model(rng)?;
        let (ns, na, d) = (model.n_states(), model.n_actions(), model.d());
        let rows: Vec<Vec<f64>> = (0..ns).map(|_| random_simplex(rng, na)).collect();
        let mut dual = HeavyDualState::new(ns, na);
        dual.q.values = random_vector(rng, ns * na);
        dual.tau = rng.random_range(0.1..2.0);
        let config = HeavyConfig {
            eps: rng.random_range(0.0..1.0),
            gamma: rng.random_range(0.5..0.99),
            ..HeavyConfig::default()
        };
        let n = 6;
        let batch = HeavyBatch {
            transitions: (0..n)
                .map(|_| WeightedTransition {
                    s: rng.random_range(0..ns),
                    a: rng.random_range(0..na),
                    s_next: rng.random_range(0..ns),
                    weight: rng.random_range(0.05..0.3),
                })
                .collect(),
            initial: (0..3)
                .map(|_| InitialItem {
                    s: rng.random_range(0..ns),
                    weight: rng.random_range(0.1..0.5),
                })
                .collect(),
        };
        let frozen: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..3.0)).collect();
        let z = random_vector(rng, d);
        let g = heavy_losses_and_grads(&model, &z, &rows, &dual, &config, &batch, Some(&frozen));

        let mut analytic = g.grad_q.clone();
        analytic.push(g.grad_tau);
        analytic.extend(&g.grad_z);

        let mut params = dual.q.values.clone();
        params.push(dual.tau);
        let mut numeric = central_difference(&mut params, |p| {
            let mut dd = dual.clone();
            dd.q.values.copy_from_slice(&p[..ns * na]);
            dd.tau = p[ns * na];
            heavy_losses_and_grads(&model, &z, &rows, &dd, &config, &batch, Some(&frozen)).critic_loss
        });
        let mut zz = z.clone();
        numeric.extend(central_difference(&mut zz, |p| {
            heavy_losses_and_grads(&model, p, &rows, &dual, &config, &batch, Some(&frozen)).actor_loss
        }));
        details.push(TrialRecord {
            trial,
            violation: relative_error(&analytic, &numeric),
            observed: analytic.iter().map(|x| x.abs()).fold(0.0, f64::max),
            reference: numeric.iter().map(|x| x.abs()).fold(0.0, f64::max),
        });
    }
    Ok(CheckReport::from_records("heavy_gradients", 1e-3, details))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn relative_error_cases() {
        assert_eq!(relative_error(&[1.0, 2.0], &[1.0, 2.0]), 0.0);
        assert_eq!(relative_error(&[0.0], &[0.0]), 0.0);
        assert!((relative_error(&[1.0], &[-1.0]) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn a_few_trials_pass() {
        let mut rng = RngSeed(8).rng();
        assert!(check_fb_gradients(3, &mut rng).unwrap().passed);
        assert!(check_heavy_gradients(3, &mut rng).unwrap().passed);
    }
}
