use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{oracle_triple, random_mdp, random_policy, CheckReport, TrialRecord};
use crate::error::{Error, Result};
use crate::fb::FbModel;
use crate::inference::{
    heavy_losses_and_grads, state_losses, HeavyBatch, HeavyConfig, HeavyDualState, InitialItem,
    WeightedTransition,
};
use crate::mdp::{StochasticPolicy, TabularMdp};
use crate::optim::Adam;
use crate::rng::RngSeed;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DualityGapConfig {
    /// Iteration cap for the dual descent.
    pub dual_iters: usize,
    /// Adam step size, decayed geometrically from `lr_start` to `lr_end`.
    pub lr_start: f64,
    pub lr_end: f64,
    pub tolerance: f64,
    /// Weight cap and clip of the critic under test.
    pub w_max: f64,
    pub y_clip: f64,
}

impl Default for DualityGapConfig {
    fn default() -> Self {
        Self {
            dual_iters: 20_000,
            lr_start: 0.05,
            lr_end: 1e-4,
            tolerance: 5e-2,
            w_max: HeavyConfig::default().w_max,
            y_clip: HeavyConfig::default().y_clip,
        }
    }
}

fn ln_cosh(y: f64) -> f64 {
    let a = y.abs();
    a + (-2.0 * a).exp().ln_1p() - std::f64::consts::LN_2
}

fn gen(x: f64) -> f64 {
    0.5 * ln_cosh(x - 1.0)
}

fn gen_d1(x: f64) -> f64 {
    0.5 * (x - 1.0).tanh()
}

fn gen_d2(x: f64) -> f64 {
    let t = (x - 1.0).tanh();
    0.5 * (1.0 - t * t)
}

/// Newton step `-H^-1 g`. When roundoff leaves `H` numerically indefinite,
/// retries with a ridge growing from `1e-14 max diag(H)`.
fn damped_newton_step(h: DMatrix<f64>, g: &DVector<f64>) -> Result<DVector<f64>> {
    if let Some(c) = h.clone().cholesky() {
        return Ok(-c.solve(g));
    }
    let scale = h.diagonal().iter().copied().fold(0.0, f64::max);
    let mut ridge = 1e-14 * scale;
    while ridge <= 1e-2 * scale {
        let mut damped = h.clone();
        for i in 0..damped.nrows() {
            damped[(i, i)] += ridge;
        }
        if let Some(c) = damped.cholesky() {
            return Ok(-c.solve(g));
        }
        ridge *= 10.0;
    }
    Err(Error::SingularSystem)
}

/// Orthonormal basis of the null space of the full-row-rank `m x n` matrix
/// `a`, from the eigenvectors of `a^T a` with the smallest eigenvalues.
fn null_space(a: &[f64], m: usize, n: usize) -> DMatrix<f64> {
    let a = DMatrix::from_row_slice(m, n, a);
    let eig = (a.transpose() * &a).symmetric_eigen();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
    let cols: Vec<DVector<f64>> = order[..n - m]
        .iter()
        .map(|&i| eig.eigenvectors.column(i).into_owned())
        .collect();
    DMatrix::from_columns(&cols)
}

/// `sup_{0 <= w <= cap} (w c - tau f(w))`; infinite when unbounded.
fn inner_sup(c: f64, tau: f64, cap: f64) -> f64 {
    if tau <= 0.0 {
        return if c > 0.0 { cap * c } else { 0.0 };
    }
    let y = c / tau;
    let w = if y <= gen_d1(0.0) {
        0.0
    } else if y >= 0.5 || y >= gen_d1(cap) {
        cap
    } else {
        (2.0 * y).atanh() + 1.0
    };
    if w.is_infinite() {
        return f64::INFINITY;
    }
    w * c - tau * gen(w)
}

struct Instance {
    ns: usize,
    na: usize,
    gamma: f64,
    mu: Vec<f64>,
    pi: Vec<Vec<f64>>,
    /// `(s, a, s', rho0)` on the support of the nominal occupancy.
    support: Vec<(usize, usize, usize, f64)>,
    losses: Vec<f64>,
    /// Upper bound on `x / rho0`.
    cap: f64,
}

impl Instance {
    fn dual_value(&self, dual: &HeavyDualState, eps: f64) -> f64 {
        let q = |s: usize, a: usize| dual.q.values[s * self.na + a];
        let mut v = eps * dual.tau;
        for s in 0..self.ns {
            for a in 0..self.na {
                v += (1.0 - self.gamma) * self.mu[s] * self.pi[s][a] * q(s, a);
            }
        }
        for &(s, a, t, r) in &self.support {
            let next: f64 = (0..self.na).map(|b| self.pi[t][b] * q(t, b)).sum();
            let c = self.losses[s] + self.gamma * next - q(s, a);
            v += r * inner_sup(c, dual.tau, self.cap);
        }
        v
    }

    fn divergence(&self, x: &[f64]) -> f64 {
        self.support
            .iter()
            .zip(x)
            .map(|(&(_, _, _, r), &xi)| r * gen(xi / r))
            .sum()
    }

    /// Flow equalities `A x = b`, one row per `(s, a)`.
    fn flow_system(&self) -> (Vec<f64>, Vec<f64>) {
        let (m, n) = (self.ns * self.na, self.support.len());
        let mut a_mat = vec![0.0; m * n];
        let mut b = vec![0.0; m];
        for s in 0..self.ns {
            for a in 0..self.na {
                let row = s * self.na + a;
                b[row] = (1.0 - self.gamma) * self.pi[s][a] * self.mu[s];
                for (j, &(ss, aa, tt, _)) in self.support.iter().enumerate() {
                    if ss == s && aa == a {
                        a_mat[row * n + j] += 1.0;
                    }
                    if tt == s {
                        a_mat[row * n + j] -= self.gamma * self.pi[s][a];
                    }
                }
            }
        }
        (a_mat, b)
    }

    /// Maximizes `sum x L(s)` over flow-consistent `0 <= x <= cap rho0` with
    /// divergence at most `eps`, by a log-barrier Newton method started from
    /// the nominal occupancy. Returns a feasible value within `1e-8` relative
    /// of the optimum.
    fn primal_value(&self, eps: f64) -> Result<f64> {
        let nominal: f64 = self
            .support
            .iter()
            .map(|&(s, _, _, r)| r * self.losses[s])
            .sum();
        if eps == 0.0 {
            return Ok(nominal);
        }
        let n = self.support.len();
        let (a_mat, b) = self.flow_system();
        let m = b.len();
        let lvec: Vec<f64> = self.support.iter().map(|&(s, _, _, _)| self.losses[s]).collect();
        let mut x: Vec<f64> = self.support.iter().map(|e| e.3).collect();

        let upper: Vec<f64> = self.support.iter().map(|e| self.cap * e.3).collect();
        let capped = self.cap.is_finite();
        let objective = |x: &[f64], t: f64| -> f64 {
            let d = self.divergence(x);
            if x.iter().any(|&v| v <= 0.0) || d >= eps {
                return f64::INFINITY;
            }
            let mut v = -t * x.iter().zip(&lvec).map(|(a, b)| a * b).sum::<f64>()
                - (eps - d).ln()
                - x.iter().map(|v| v.ln()).sum::<f64>();
            if capped {
                if x.iter().zip(&upper).any(|(a, u)| a >= u) {
                    return f64::INFINITY;
                }
                v -= x.iter().zip(&upper).map(|(a, u)| (u - a).ln()).sum::<f64>();
            }
            v
        };
        let n_ineq = if capped { 2 * n + 1 } else { n + 1 };

        let x0 = x.clone();
        let basis = null_space(&a_mat, m, n);
        let dim = basis.ncols();
        let mut v = DVector::<f64>::zeros(dim);
        let point = |v: &DVector<f64>| -> Vec<f64> {
            let shift = &basis * v;
            x0.iter().zip(shift.iter()).map(|(a, b)| a + b).collect()
        };

        let mut t = 1.0;
        loop {
            let mut decrement = f64::INFINITY;
            for newton in 0.. {
                if newton == 200 {
                    // the stage's suboptimality is at most decrement / 2
                    if decrement > 1e-6 {
                        return Err(Error::NoConvergence("barrier Newton iteration cap".into()));
                    }
                    break;
                }
                x = point(&v);
                let slack = eps - self.divergence(&x);
                let grad_d: Vec<f64> = self
                    .support
                    .iter()
                    .zip(&x)
                    .map(|(e, &xi)| gen_d1(xi / e.3))
                    .collect();
                let g = DVector::from_fn(n, |i, _| {
                    let box_term = if capped { 1.0 / (upper[i] - x[i]) } else { 0.0 };
                    -t * lvec[i] + grad_d[i] / slack - 1.0 / x[i] + box_term
                });
                let mut h = DMatrix::from_fn(n, n, |i, j| grad_d[i] * grad_d[j] / (slack * slack));
                for i in 0..n {
                    let r = self.support[i].3;
                    h[(i, i)] += gen_d2(x[i] / r) / (r * slack) + 1.0 / (x[i] * x[i]);
                    if capped {
                        h[(i, i)] += 1.0 / ((upper[i] - x[i]) * (upper[i] - x[i]));
                    }
                }
                let gv = basis.transpose() * &g;
                let hv = basis.transpose() * &h * &basis;
                let step = damped_newton_step(hv, &gv)?;
                decrement = -gv.dot(&step);
                let base = objective(&x, t);
                if decrement / 2.0 <= 1e-12_f64.max(1e-15 * base.abs()) {
                    break;
                }
                let mut size = 1.0;
                loop {
                    let trial = &v + size * &step;
                    if objective(&point(&trial), t) <= base - 0.25 * size * decrement {
                        v = trial;
                        break;
                    }
                    size *= 0.5;
                    if size < 1e-16 {
                        return Err(Error::NoConvergence("barrier line search stalled".into()));
                    }
                }
            }
            x = point(&v);
            let value: f64 = x.iter().zip(&lvec).map(|(a, b)| a * b).sum();
            if n_ineq as f64 / t <= 1e-8 * value.abs().max(1e-3) {
                let residual = (0..m)
                    .map(|row| {
                        let ax: f64 = (0..n).map(|j| a_mat[row * n + j] * x[j]).sum();
                        (ax - b[row]).abs()
                    })
                    .fold(0.0, f64::max);
                let d = self.divergence(&x);
                if residual > 1e-9 || d > eps * (1.0 + 1e-9) {
                    return Err(Error::NoConvergence(format!(
                        "primal iterate left the feasible set (flow residual {residual:e}, divergence {d} > {eps})"
                    )));
                }
                return Ok(value);
            }
            t *= 10.0;
        }
    }
}

/// Primal-dual agreement for robust inference on a tiny MDP at fixed `z`.
///
/// The primal maximizes the expected imitation loss over flow-consistent
/// occupancies supported on the nominal one with SoftTV divergence at most
/// `eps` and ratio to the nominal at most the critic's effective weight cap
/// `min(w_max, 1 + artanh(1 - 2 y_clip))`. The dual runs Adam on `(Q, tau)`
/// using the analytic gradients with exact expectations, and keeps the best
/// value of the exactly evaluated dual function. Reports the relative gap.
pub fn check_heavy_duality_gap(
    mdp: &TabularMdp,
    expert: &StochasticPolicy,
    model: &FbModel,
    z: &[f64],
    eps: f64,
    config: &DualityGapConfig,
) -> Result<CheckReport> {
    let (ns, na) = (mdp.n_states(), mdp.n_actions());
    if ns > 4 || na > 2 {
        return Err(Error::InvalidArgument("duality check expects at most 4 states and 2 actions".into()));
    }
    mdp.check_policy(expert)?;
    let pi: Vec<Vec<f64>> = (0..ns).map(|s| expert.row(s).to_vec()).collect();
    let rho = oracle_triple(mdp, expert).ok_or(Error::SingularSystem)?;
    let mut support = Vec::new();
    for s in 0..ns {
        for a in 0..na {
            for t in 0..ns {
                let r = rho[(s * na + a) * ns + t];
                if r > 0.0 {
                    support.push((s, a, t, r));
                }
            }
        }
    }
    let inst = Instance {
        ns,
        na,
        gamma: mdp.gamma(),
        mu: mdp.mu().to_vec(),
        losses: state_losses(model, z, &pi),
        pi,
        support,
        cap: f64::INFINITY,
    };
    let uncapped = inst.primal_value(eps)?;
    // clipping c / tau at 0.5 - y_clip caps the weights here
    let cap = config.w_max.min(1.0 + (1.0 - 2.0 * config.y_clip).atanh());
    let inst = Instance { cap, ..inst };
    let primal = inst.primal_value(eps)?;
    log::debug!("duality check: capped primal {primal}, uncapped primal {uncapped}, cap {cap}");

    let heavy = HeavyConfig {
        eps,
        gamma: mdp.gamma(),
        w_max: config.w_max,
        y_clip: config.y_clip,
        ..HeavyConfig::default()
    };
    let batch = HeavyBatch {
        transitions: inst
            .support
            .iter()
            .map(|&(s, a, s_next, weight)| WeightedTransition { s, a, s_next, weight })
            .collect(),
        initial: (0..ns).map(|s| InitialItem { s, weight: inst.mu[s] }).collect(),
    };
    let mut dual = HeavyDualState::new(ns, na);
    let mut opt_q = Adam::new(ns * na, config.lr_start);
    let mut opt_tau = Adam::new(1, config.lr_start);
    let decay = (config.lr_end / config.lr_start).powf(1.0 / config.dual_iters.max(1) as f64);
    let mut best = inst.dual_value(&dual, eps);
    for _ in 0..config.dual_iters {
        let g = heavy_losses_and_grads(model, z, &inst.pi, &dual, &heavy, &batch, None);
        let tau_grad = if dual.tau <= 0.0 { g.grad_tau.min(0.0) } else { g.grad_tau };
        let norm = (g.grad_q.iter().map(|x| x * x).sum::<f64>() + tau_grad * tau_grad).sqrt();
        if norm <= 1e-6 {
            break;
        }
        opt_q.step(&mut dual.q.values, &g.grad_q);
        let mut tau = [dual.tau];
        opt_tau.step(&mut tau, &[g.grad_tau]);
        dual.tau = tau[0].max(0.0);
        opt_q.lr *= decay;
        opt_tau.lr *= decay;
        let v = inst.dual_value(&dual, eps);
        if v < best {
            best = v;
        }
    }
    if !best.is_finite() {
        return Err(Error::NoConvergence("no dual iterate with a finite inner supremum".into()));
    }
    let gap = (best - primal) / primal.abs().max(1e-12);
    Ok(CheckReport::from_records(
        "heavy_duality_gap",
        config.tolerance,
        vec![TrialRecord {
            trial: 0,
            violation: gap.abs(),
            observed: best,
            reference: primal,
        }],
    ))
}

/// Duality-gap check on `instances` random 3-state, 2-action MDPs for each
/// radius in `radii`.
pub fn duality_gap_suite(
    instances: usize,
    radii: &[f64],
    seed: RngSeed,
    config: &DualityGapConfig,
) -> Result<CheckReport> {
    let mut rng = seed.rng();
    let mut reports = Vec::new();
    for _ in 0..instances {
        let mdp = random_mdp(&mut rng, 3, 2, 0.9)?;
        let expert = random_policy(&mut rng, 3, 2)?;
        let model = FbModel::init(3, 2, 3, 0.5, RngSeed(rng.random()))?;
        let z: Vec<f64> = (0..3).map(|_| rng.random_range(-1.5..1.5)).collect();
        for &eps in radii {
            reports.push(check_heavy_duality_gap(&mdp, &expert, &model, &z, eps, config)?);
        }
    }
    Ok(CheckReport::merge("heavy_duality_gap", config.tolerance, reports))
}
