//! Tabular forward-backward representation.
//!
//! `F(s, a, z) = Theta[s, a] z + theta0[s, a]` is affine in the latent and
//! `B(s)` is a free table whose rows are kept on the radius-`sqrt(d)`
//! sphere. For a fixed `z` the TD loss is quadratic in the parameters, so all
//! gradients are written out by hand.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mdp::{argmax, softmax, StochasticPolicy};
use crate::optim::Adam;
use crate::rng::{sample_categorical, RngSeed};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Transition {
    pub s: usize,
    pub a: usize,
    pub s_next: usize,
}

/// Reward-free exploratory data from a single nominal MDP.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TransitionDataset {
    pub n_states: usize,
    pub n_actions: usize,
    pub transitions: Vec<Transition>,
}

impl TransitionDataset {
    pub fn is_empty(&self) -> bool {
        self.transitions.is_empty()
    }

    pub fn len(&self) -> usize {
        self.transitions.len()
    }

    /// `(s, a)` pairs never visited.
    pub fn unvisited_pairs(&self) -> Vec<(usize, usize)> {
        let mut seen = vec![false; self.n_states * self.n_actions];
        for t in &self.transitions {
            seen[t.s * self.n_actions + t.a] = true;
        }
        seen.iter()
            .enumerate()
            .filter(|(_, &v)| !v)
            .map(|(i, _)| (i / self.n_actions, i % self.n_actions))
            .collect()
    }
}

/// Task vector on the radius-`sqrt(d)` sphere.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct LatentVector(Vec<f64>);

impl LatentVector {
    /// Rescales `v` onto the radius-`sqrt(d)` sphere.
    pub fn project(mut v: Vec<f64>) -> Result<Self> {
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm == 0.0 {
            return Err(Error::ZeroVector);
        }
        if !norm.is_finite() {
            return Err(Error::NonFinite);
        }
        let scale = (v.len() as f64).sqrt() / norm;
        for x in &mut v {
            *x *= scale;
        }
        Ok(Self(v))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn norm(&self) -> f64 {
        self.0.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FbModel {
    d: usize,
    n_states: usize,
    n_actions: usize,
    pub temperature: f64,
    theta: Vec<f64>,
    theta0: Vec<f64>,
    b: Vec<f64>,
    target_theta: Vec<f64>,
    target_theta0: Vec<f64>,
    target_b: Vec<f64>,
}

impl FbModel {
    /// Random initialization; `B` rows are normalized and targets copy the
    /// main parameters.
    pub fn init(
        n_states: usize,
        n_actions: usize,
        d: usize,
        temperature: f64,
        seed: RngSeed,
    ) -> Result<Self> {
        if d == 0 || n_states == 0 || n_actions == 0 {
            return Err(Error::InvalidArgument("empty model shape".into()));
        }
        if !(temperature > 0.0) {
            return Err(Error::InvalidArgument("temperature must be positive".into()));
        }
        let mut rng = seed.rng();
        let scale = 0.1 / (d as f64).sqrt();
        let theta: Vec<f64> = (0..n_states * n_actions * d * d)
            .map(|_| scale * rng.sample::<f64, _>(StandardNormal))
            .collect();
        let theta0 = vec![0.0; n_states * n_actions * d];
        let b: Vec<f64> = (0..n_states * d)
            .map(|_| rng.sample::<f64, _>(StandardNormal))
            .collect();
        let mut model = Self::from_parts(n_states, n_actions, d, temperature, theta, theta0, b)?;
        model.normalize_backward();
        model.sync_targets();
        Ok(model)
    }

    /// Builds a model from raw parameter tables; targets equal the main copy.
    pub fn from_parts(
        n_states: usize,
        n_actions: usize,
        d: usize,
        temperature: f64,
        theta: Vec<f64>,
        theta0: Vec<f64>,
        b: Vec<f64>,
    ) -> Result<Self> {
        if theta.len() != n_states * n_actions * d * d
            || theta0.len() != n_states * n_actions * d
            || b.len() != n_states * d
        {
            return Err(Error::DimensionMismatch(
                "parameter tables do not match (n_states, n_actions, d)".into(),
            ));
        }
        Ok(Self {
            d,
            n_states,
            n_actions,
            temperature,
            target_theta: theta.clone(),
            target_theta0: theta0.clone(),
            target_b: b.clone(),
            theta,
            theta0,
            b,
        })
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn theta(&self) -> &[f64] {
        &self.theta
    }

    pub fn theta0(&self) -> &[f64] {
        &self.theta0
    }

    pub fn b(&self) -> &[f64] {
        &self.b
    }

    pub fn target_theta(&self) -> &[f64] {
        &self.target_theta
    }

    pub fn target_theta0(&self) -> &[f64] {
        &self.target_theta0
    }

    pub fn target_b(&self) -> &[f64] {
        &self.target_b
    }

    pub fn theta_mut(&mut self) -> &mut [f64] {
        &mut self.theta
    }

    pub fn theta0_mut(&mut self) -> &mut [f64] {
        &mut self.theta0
    }

    pub fn b_mut(&mut self) -> &mut [f64] {
        &mut self.b
    }

    pub fn backward(&self, s: usize) -> &[f64] {
        &self.b[s * self.d..(s + 1) * self.d]
    }

    fn target_backward(&self, s: usize) -> &[f64] {
        &self.target_b[s * self.d..(s + 1) * self.d]
    }

    fn sa(&self, s: usize, a: usize) -> usize {
        s * self.n_actions + a
    }

    /// `Theta[s, a]` as a row-major `d x d` block.
    pub fn theta_block(&self, s: usize, a: usize) -> &[f64] {
        let dd = self.d * self.d;
        let i = self.sa(s, a);
        &self.theta[i * dd..(i + 1) * dd]
    }

    pub fn theta0_block(&self, s: usize, a: usize) -> &[f64] {
        let i = self.sa(s, a);
        &self.theta0[i * self.d..(i + 1) * self.d]
    }

    /// `F(s, a, z) = Theta[s, a] z + theta0[s, a]`.
    pub fn forward_embed(&self, s: usize, a: usize, z: &[f64]) -> Vec<f64> {
        affine(self.theta_block(s, a), self.theta0_block(s, a), z, self.d)
    }

    fn target_forward(&self, s: usize, a: usize, z: &[f64]) -> Vec<f64> {
        let dd = self.d * self.d;
        let i = self.sa(s, a);
        affine(
            &self.target_theta[i * dd..(i + 1) * dd],
            &self.target_theta0[i * self.d..(i + 1) * self.d],
            z,
            self.d,
        )
    }

    /// `Theta[s, a]^T z`.
    pub(crate) fn theta_transpose_times(&self, s: usize, a: usize, z: &[f64]) -> Vec<f64> {
        let block = self.theta_block(s, a);
        let mut out = vec![0.0; self.d];
        for (row, &zr) in block.chunks(self.d).zip(z) {
            for (o, &m) in out.iter_mut().zip(row) {
                *o += m * zr;
            }
        }
        out
    }

    /// `F(s, a, z)^T z` for every action.
    pub fn action_scores(&self, s: usize, z: &[f64]) -> Vec<f64> {
        (0..self.n_actions)
            .map(|a| dot(&self.forward_embed(s, a, z), z))
            .collect()
    }

    /// Softmax of the action scores at `temperature` in every state.
    pub fn policy_from_latent(&self, z: &[f64], temperature: f64) -> Result<StochasticPolicy> {
        if !(temperature > 0.0) {
            return Err(Error::InvalidArgument("temperature must be positive".into()));
        }
        let mut probs = Vec::with_capacity(self.n_states * self.n_actions);
        for s in 0..self.n_states {
            let scores = self.action_scores(s, z);
            if scores.iter().any(|x| !x.is_finite()) {
                return Err(Error::NonFinite);
            }
            probs.extend(softmax(&scores, temperature));
        }
        StochasticPolicy::new(self.n_states, self.n_actions, probs)
    }

    /// Deterministic `argmax_a F(s, a, z)^T z` policy, smallest index on ties.
    pub fn greedy_policy(&self, z: &[f64]) -> Result<StochasticPolicy> {
        let actions: Vec<usize> = (0..self.n_states)
            .map(|s| argmax(&self.action_scores(s, z)))
            .collect();
        StochasticPolicy::deterministic(self.n_actions, &actions)
    }

    /// Rescales every `B` row to norm `sqrt(d)`. Zero rows are left alone.
    pub fn normalize_backward(&mut self) {
        let radius = (self.d as f64).sqrt();
        for row in self.b.chunks_mut(self.d) {
            let norm = row.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm > 0.0 {
                for x in row {
                    *x *= radius / norm;
                }
            }
        }
    }

    pub fn sync_targets(&mut self) {
        self.target_theta.clone_from(&self.theta);
        self.target_theta0.clone_from(&self.theta0);
        self.target_b.clone_from(&self.b);
    }

    /// `target <- (1 - nu) target + nu main`.
    pub fn polyak_update(&mut self, nu: f64) {
        fn blend(target: &mut [f64], main: &[f64], nu: f64) {
            for (t, m) in target.iter_mut().zip(main) {
                *t = (1.0 - nu) * *t + nu * m;
            }
        }
        blend(&mut self.target_theta, &self.theta, nu);
        blend(&mut self.target_theta0, &self.theta0, nu);
        blend(&mut self.target_b, &self.b, nu);
    }

    pub fn to_document(&self) -> ModelDocument {
        let d = self.d;
        let theta = (0..self.n_states)
            .map(|s| {
                (0..self.n_actions)
                    .map(|a| self.theta_block(s, a).chunks(d).map(<[f64]>::to_vec).collect())
                    .collect()
            })
            .collect();
        let theta0 = (0..self.n_states)
            .map(|s| (0..self.n_actions).map(|a| self.theta0_block(s, a).to_vec()).collect())
            .collect();
        let b = self.b.chunks(d).map(<[f64]>::to_vec).collect();
        ModelDocument {
            d,
            temperature: self.temperature,
            theta,
            theta0,
            b,
            env: None,
        }
    }

    pub fn from_document(doc: &ModelDocument) -> Result<Self> {
        let d = doc.d;
        let n_states = doc.b.len();
        let n_actions = doc.theta.first().map_or(0, Vec::len);
        let mismatch = || Error::DimensionMismatch("checkpoint tables are ragged".into());
        let mut theta = Vec::with_capacity(n_states * n_actions * d * d);
        for per_state in &doc.theta {
            if per_state.len() != n_actions {
                return Err(mismatch());
            }
            for block in per_state {
                if block.len() != d || block.iter().any(|r| r.len() != d) {
                    return Err(mismatch());
                }
                theta.extend(block.iter().flatten());
            }
        }
        let mut theta0 = Vec::with_capacity(n_states * n_actions * d);
        for per_state in &doc.theta0 {
            if per_state.len() != n_actions || per_state.iter().any(|v| v.len() != d) {
                return Err(mismatch());
            }
            theta0.extend(per_state.iter().flatten());
        }
        if doc.b.iter().any(|r| r.len() != d) {
            return Err(mismatch());
        }
        let b = doc.b.iter().flatten().copied().collect();
        if !(doc.temperature > 0.0) {
            return Err(Error::InvalidArgument("temperature must be positive".into()));
        }
        Self::from_parts(n_states, n_actions, d, doc.temperature, theta, theta0, b)
    }
}

/// JSON checkpoint `{"d", "temperature", "theta", "theta0", "b"}`.
///
/// `theta[s][a]` is a `d x d` matrix, `theta0[s][a]` and `b[s]` are vectors.
/// `env` optionally records the environment the model was trained on.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelDocument {
    pub d: usize,
    pub temperature: f64,
    pub theta: Vec<Vec<Vec<Vec<f64>>>>,
    pub theta0: Vec<Vec<Vec<f64>>>,
    pub b: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub env: Option<serde_json::Value>,
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn affine(block: &[f64], bias: &[f64], z: &[f64], d: usize) -> Vec<f64> {
    block
        .chunks(d)
        .zip(bias)
        .map(|(row, b)| dot(row, z) + b)
        .collect()
}

/// Uniform on the radius-`sqrt(d)` sphere with probability `mix_ratio`,
/// otherwise `B(s)` for a uniformly drawn dataset state.
pub fn sample_latent<R: Rng + ?Sized>(
    model: &FbModel,
    dataset: &TransitionDataset,
    mix_ratio: f64,
    rng: &mut R,
) -> Result<LatentVector> {
    if mix_ratio < 1.0 && dataset.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let u: f64 = rng.random();
    if u < mix_ratio {
        loop {
            let g: Vec<f64> = (0..model.d).map(|_| rng.sample(StandardNormal)).collect();
            match LatentVector::project(g) {
                Ok(z) => return Ok(z),
                Err(Error::ZeroVector) => continue,
                Err(e) => return Err(e),
            }
        }
    }
    let t = dataset.transitions[rng.random_range(0..dataset.len())];
    Ok(LatentVector(model.backward(t.s).to_vec()))
}

/// One element of a TD minibatch. `a_next` is drawn from `pi_z(.|s_next)`
/// before the loss is evaluated.
#[derive(Clone, Debug, PartialEq)]
pub struct FbSample {
    pub s: usize,
    pub a: usize,
    pub s_next: usize,
    pub a_next: usize,
    pub s_plus: usize,
    pub z: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FbGrads {
    pub theta: Vec<f64>,
    pub theta0: Vec<f64>,
    pub b: Vec<f64>,
}

/// TD loss
/// `mean (F(s,a,z)^T B(s+) - gamma Fbar(s',a',z)^T Bbar(s+))^2 - 2 mean F(s,a,z)^T B(s')`
/// and its gradient with respect to the main parameters. Target tables are
/// constants.
pub fn fb_td_loss_and_grads(model: &FbModel, gamma: f64, batch: &[FbSample]) -> (f64, FbGrads) {
    let d = model.d;
    let mut grads = FbGrads {
        theta: vec![0.0; model.theta.len()],
        theta0: vec![0.0; model.theta0.len()],
        b: vec![0.0; model.b.len()],
    };
    if batch.is_empty() {
        return (0.0, grads);
    }
    let n = batch.len() as f64;
    let mut loss = 0.0;
    for item in batch {
        let f = model.forward_embed(item.s, item.a, &item.z);
        let b_plus = model.backward(item.s_plus);
        let b_next = model.backward(item.s_next);
        let target = gamma
            * dot(
                &model.target_forward(item.s_next, item.a_next, &item.z),
                model.target_backward(item.s_plus),
            );
        let delta = dot(&f, b_plus) - target;
        loss += delta * delta / n - 2.0 * dot(&f, b_next) / n;

        // dL/dF for this item
        let g_f: Vec<f64> = b_plus
            .iter()
            .zip(b_next)
            .map(|(bp, bn)| 2.0 * (delta * bp - bn) / n)
            .collect();
        let i = model.sa(item.s, item.a);
        let block = &mut grads.theta[i * d * d..(i + 1) * d * d];
        for (row, gf) in block.chunks_mut(d).zip(&g_f) {
            for (g, zc) in row.iter_mut().zip(&item.z) {
                *g += gf * zc;
            }
        }
        for (g, gf) in grads.theta0[i * d..(i + 1) * d].iter_mut().zip(&g_f) {
            *g += gf;
        }
        let plus = &mut grads.b[item.s_plus * d..(item.s_plus + 1) * d];
        for (g, fk) in plus.iter_mut().zip(&f) {
            *g += 2.0 * delta * fk / n;
        }
        let next = &mut grads.b[item.s_next * d..(item.s_next + 1) * d];
        for (g, fk) in next.iter_mut().zip(&f) {
            *g -= 2.0 * fk / n;
        }
    }
    (loss, grads)
}

/// Pretraining hyperparameters. Defaults are the desk-scale setting.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PretrainConfig {
    pub d: usize,
    pub steps: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub polyak: f64,
    pub z_mix_ratio: f64,
    pub temperature: f64,
    pub gamma: f64,
    pub seed: RngSeed,
}

impl Default for PretrainConfig {
    fn default() -> Self {
        Self {
            d: 8,
            steps: 20_000,
            batch_size: 256,
            lr: 1e-3,
            polyak: 0.01,
            z_mix_ratio: 0.5,
            temperature: 0.2,
            gamma: 0.98,
            seed: RngSeed(0),
        }
    }
}

impl PretrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 || self.d == 0 {
            return Err(Error::InvalidArgument("batch size and d must be positive".into()));
        }
        if !(self.lr > 0.0) {
            return Err(Error::InvalidArgument("learning rate must be positive".into()));
        }
        if !(self.polyak > 0.0 && self.polyak <= 1.0) {
            return Err(Error::InvalidArgument("polyak must be in (0, 1]".into()));
        }
        if !(0.0..=1.0).contains(&self.z_mix_ratio) {
            return Err(Error::InvalidArgument("z mixing ratio must be in [0, 1]".into()));
        }
        if !(self.gamma >= 0.0 && self.gamma < 1.0) {
            return Err(Error::BadDiscount(self.gamma));
        }
        Ok(())
    }
}

/// Unsupervised FB pretraining on a fixed exploratory dataset.
///
/// Each step draws a minibatch of transitions, latents and `s+` states,
/// takes an Adam step on the TD loss, renormalizes `B` and moves the
/// targets toward the main parameters.
pub fn pretrain(dataset: &TransitionDataset, config: &PretrainConfig) -> Result<FbModel> {
    config.validate()?;
    if dataset.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let missing = dataset.unvisited_pairs();
    if !missing.is_empty() {
        log::warn!(
            "exploratory dataset leaves {} state-action pairs unvisited",
            missing.len()
        );
    }
    let mut model = FbModel::init(
        dataset.n_states,
        dataset.n_actions,
        config.d,
        config.temperature,
        config.seed.derive(1),
    )?;
    let mut rng = config.seed.derive(2).rng();
    let mut opt_theta = Adam::new(model.theta.len(), config.lr);
    let mut opt_theta0 = Adam::new(model.theta0.len(), config.lr);
    let mut opt_b = Adam::new(model.b.len(), config.lr);
    let mut batch = Vec::with_capacity(config.batch_size);
    for _ in 0..config.steps {
        batch.clear();
        for _ in 0..config.batch_size {
            let t = dataset.transitions[rng.random_range(0..dataset.len())];
            let z = sample_latent(&model, dataset, config.z_mix_ratio, &mut rng)?.into_vec();
            let probs = softmax(&model.action_scores(t.s_next, &z), model.temperature);
            let a_next = sample_categorical(&mut rng, &probs);
            let s_plus = dataset.transitions[rng.random_range(0..dataset.len())].s;
            batch.push(FbSample {
                s: t.s,
                a: t.a,
                s_next: t.s_next,
                a_next,
                s_plus,
                z,
            });
        }
        let (loss, grads) = fb_td_loss_and_grads(&model, config.gamma, &batch);
        if !loss.is_finite() {
            return Err(Error::NonFinite);
        }
        opt_theta.step(&mut model.theta, &grads.theta);
        opt_theta0.step(&mut model.theta0, &grads.theta0);
        opt_b.step(&mut model.b, &grads.b);
        model.normalize_backward();
        model.polyak_update(config.polyak);
    }
    Ok(model)
}

/// `z = E_{s'}[B(s') r(s')]` over dataset next-states, projected to the sphere.
pub fn z_from_reward(
    model: &FbModel,
    dataset: &TransitionDataset,
    reward: &crate::mdp::RewardTable,
) -> Result<LatentVector> {
    if dataset.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut acc = vec![0.0; model.d];
    for t in &dataset.transitions {
        let r = reward.r[t.s_next];
        for (a, b) in acc.iter_mut().zip(model.backward(t.s_next)) {
            *a += r * b;
        }
    }
    let n = dataset.len() as f64;
    LatentVector::project(acc.into_iter().map(|x| x / n).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mdp::RewardTable;
    use approx::assert_abs_diff_eq;

    fn tiny_dataset() -> TransitionDataset {
        let transitions = vec![
            Transition { s: 0, a: 0, s_next: 1 },
            Transition { s: 1, a: 1, s_next: 0 },
            Transition { s: 0, a: 1, s_next: 0 },
            Transition { s: 1, a: 0, s_next: 1 },
        ];
        TransitionDataset {
            n_states: 2,
            n_actions: 2,
            transitions,
        }
    }

    #[test]
    fn sampled_latents_lie_on_sphere() {
        let model = FbModel::init(2, 2, 5, 0.2, RngSeed(3)).unwrap();
        let data = tiny_dataset();
        let mut rng = RngSeed(4).rng();
        for _ in 0..200 {
            let z = sample_latent(&model, &data, 0.5, &mut rng).unwrap();
            assert_abs_diff_eq!(z.norm(), 5f64.sqrt(), epsilon = 1e-8);
        }
    }

    #[test]
    fn zero_mix_returns_backward_rows() {
        let model = FbModel::init(2, 2, 3, 0.2, RngSeed(3)).unwrap();
        let data = tiny_dataset();
        let mut rng = RngSeed(5).rng();
        for _ in 0..50 {
            let z = sample_latent(&model, &data, 0.0, &mut rng).unwrap();
            assert!(z.as_slice() == model.backward(0) || z.as_slice() == model.backward(1));
        }
    }

    #[test]
    fn sphere_latents_are_centered() {
        let model = FbModel::init(1, 1, 3, 0.2, RngSeed(0)).unwrap();
        let empty = TransitionDataset {
            n_states: 1,
            n_actions: 1,
            transitions: vec![],
        };
        let mut rng = RngSeed(9).rng();
        let draws = 100_000;
        let mean = (0..draws)
            .map(|_| sample_latent(&model, &empty, 1.0, &mut rng).unwrap().as_slice()[0])
            .sum::<f64>()
            / draws as f64;
        assert!(mean.abs() < 0.02, "mean {mean}");
        assert!(matches!(
            sample_latent(&model, &empty, 0.5, &mut rng),
            Err(Error::EmptyDataset)
        ));
    }

    #[test]
    fn forward_embed_structure() {
        let d = 3;
        let zeros = FbModel::from_parts(1, 1, d, 1.0, vec![0.0; 9], vec![0.0; 3], vec![1.0; 3])
            .unwrap();
        assert_eq!(zeros.forward_embed(0, 0, &[1.0, 2.0, 3.0]), vec![0.0; 3]);

        let identity = vec![1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0];
        let id = FbModel::from_parts(1, 1, d, 1.0, identity, vec![0.0; 3], vec![1.0; 3]).unwrap();
        assert_eq!(id.forward_embed(0, 0, &[1.0, -2.0, 0.5]), vec![1.0, -2.0, 0.5]);

        let model = FbModel::init(2, 2, d, 0.2, RngSeed(1)).unwrap();
        let mut model = model;
        model.theta0_mut().iter_mut().enumerate().for_each(|(i, x)| *x = 0.1 * i as f64);
        let z1 = [0.3, -0.2, 1.0];
        let z2 = [-1.0, 0.5, 0.25];
        let sum: Vec<f64> = z1.iter().zip(&z2).map(|(a, b)| a + b).collect();
        let lhs = model.forward_embed(1, 0, &sum);
        let f1 = model.forward_embed(1, 0, &z1);
        let f2 = model.forward_embed(1, 0, &z2);
        for k in 0..d {
            let rhs = f1[k] + f2[k] - model.theta0_block(1, 0)[k];
            assert_abs_diff_eq!(lhs[k], rhs, epsilon = 1e-12);
        }
    }

    #[test]
    fn policy_from_latent_cases() {
        let flat = FbModel::from_parts(2, 3, 2, 1.0, vec![0.0; 24], vec![0.0; 12], vec![1.0; 4])
            .unwrap();
        let pi = flat.policy_from_latent(&[1.0, 1.0], 0.3).unwrap();
        for s in 0..2 {
            for &p in pi.row(s) {
                assert_abs_diff_eq!(p, 1.0 / 3.0, epsilon = 1e-15);
            }
        }
        let model = FbModel::init(4, 3, 4, 0.2, RngSeed(8)).unwrap();
        let z = LatentVector::project(vec![1.0, -0.5, 0.2, 0.9]).unwrap();
        let sharp = model.policy_from_latent(z.as_slice(), 0.01).unwrap();
        let greedy = model.greedy_policy(z.as_slice()).unwrap();
        for s in 0..4 {
            let scores = model.action_scores(s, z.as_slice());
            let best = argmax(&scores);
            let mut sorted = scores.clone();
            sorted.sort_by(|a, b| b.total_cmp(a));
            if sorted[0] - sorted[1] > 0.05 {
                assert!(sharp.prob(s, best) >= 0.99);
            }
            assert_eq!(greedy.prob(s, best), 1.0);
            assert_abs_diff_eq!(sharp.row(s).iter().sum::<f64>(), 1.0, epsilon = 1e-12);
        }
    }

    fn random_batch(model: &FbModel, rng: &mut rand_chacha::ChaCha8Rng, n: usize) -> Vec<FbSample> {
        (0..n)
            .map(|_| FbSample {
                s: rng.random_range(0..model.n_states()),
                a: rng.random_range(0..model.n_actions()),
                s_next: rng.random_range(0..model.n_states()),
                a_next: rng.random_range(0..model.n_actions()),
                s_plus: rng.random_range(0..model.n_states()),
                z: LatentVector::project((0..model.d()).map(|_| rng.random::<f64>() - 0.5).collect())
                    .unwrap()
                    .into_vec(),
            })
            .collect()
    }

    #[test]
    fn zero_forward_gives_zero_loss() {
        let model = FbModel::from_parts(2, 2, 3, 1.0, vec![0.0; 36], vec![0.0; 12], vec![1.0; 6])
            .unwrap();
        let mut rng = RngSeed(2).rng();
        let batch = random_batch(&model, &mut rng, 8);
        let (loss, _) = fb_td_loss_and_grads(&model, 0.9, &batch);
        assert_eq!(loss, 0.0);
    }

    #[test]
    fn undiscounted_loss_is_plain_square() {
        let model = FbModel::init(2, 2, 3, 0.2, RngSeed(6)).unwrap();
        let mut rng = RngSeed(7).rng();
        let batch = random_batch(&model, &mut rng, 1);
        let item = &batch[0];
        let f = model.forward_embed(item.s, item.a, &item.z);
        let expected =
            dot(&f, model.backward(item.s_plus)).powi(2) - 2.0 * dot(&f, model.backward(item.s_next));
        let (loss, _) = fb_td_loss_and_grads(&model, 0.0, &batch);
        assert_abs_diff_eq!(loss, expected, epsilon = 1e-12);
    }

    #[test]
    fn polyak_one_copies_main() {
        let mut model = FbModel::init(2, 2, 3, 0.2, RngSeed(6)).unwrap();
        model.theta_mut()[0] += 1.0;
        model.b_mut()[1] -= 0.5;
        model.polyak_update(1.0);
        assert_eq!(model.target_theta(), model.theta());
        assert_eq!(model.target_b(), model.b());
    }

    #[test]
    fn zero_steps_returns_initialization() {
        let config = PretrainConfig {
            steps: 0,
            d: 3,
            seed: RngSeed(5),
            ..PretrainConfig::default()
        };
        let model = pretrain(&tiny_dataset(), &config).unwrap();
        let init = FbModel::init(2, 2, 3, config.temperature, RngSeed(5).derive(1)).unwrap();
        assert_eq!(model, init);
    }

    #[test]
    fn pretraining_keeps_backward_normalized_and_is_deterministic() {
        let config = PretrainConfig {
            steps: 50,
            batch_size: 16,
            d: 4,
            seed: RngSeed(11),
            ..PretrainConfig::default()
        };
        let a = pretrain(&tiny_dataset(), &config).unwrap();
        let b = pretrain(&tiny_dataset(), &config).unwrap();
        assert_eq!(a, b);
        for s in 0..2 {
            let norm = dot(a.backward(s), a.backward(s)).sqrt();
            assert_abs_diff_eq!(norm, 2.0, epsilon = 1e-8);
        }
    }

    #[test]
    fn z_from_reward_cases() {
        let model = FbModel::init(2, 2, 3, 0.2, RngSeed(6)).unwrap();
        let data = tiny_dataset();
        assert!(matches!(
            z_from_reward(&model, &data, &RewardTable::constant("0", 2, 0.0)),
            Err(Error::ZeroVector)
        ));
        let z = z_from_reward(&model, &data, &RewardTable::constant("c", 2, 2.5)).unwrap();
        assert_abs_diff_eq!(z.norm(), 3f64.sqrt(), epsilon = 1e-12);
        let mean: Vec<f64> = (0..3)
            .map(|k| (model.backward(0)[k] + model.backward(1)[k]) / 2.0)
            .collect();
        let expected = LatentVector::project(mean).unwrap();
        for (a, b) in z.as_slice().iter().zip(expected.as_slice()) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-12);
        }
    }

    #[test]
    fn checkpoint_round_trip() {
        let model = FbModel::init(3, 2, 4, 0.2, RngSeed(1)).unwrap();
        let doc = model.to_document();
        let text = serde_json::to_string(&doc).unwrap();
        let back: ModelDocument = serde_json::from_str(&text).unwrap();
        assert_eq!(FbModel::from_document(&back).unwrap(), model);
    }
}
