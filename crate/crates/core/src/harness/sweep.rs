use std::collections::BTreeMap;
use std::io::Write;

use serde::{Deserialize, Serialize};

use super::data::{generate_exploratory_dataset, generate_expert, rollouts_of};
use super::env::{build_env, EnvSpec};
use super::eval::{evaluate_policy_exact, evaluate_policy_mc};
use super::perturb::{perturb_kernel, PerturbationSpec};
use crate::error::{Error, Result};
use crate::fb::{pretrain, z_from_reward, FbModel, PretrainConfig, TransitionDataset};
use crate::inference::{
    infer_fb_il, infer_rbfm_heavy, infer_rbfm_light, ExpertDataset, FbIlConfig, HeavyConfig,
    InferenceResult, LightConfig, Method,
};
use crate::mdp::{RewardTable, TabularMdp};
use crate::rng::RngSeed;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExpertSource {
    /// Softmax over value-iteration `Q` on the nominal MDP.
    #[default]
    ValueIteration,
    /// The pretrained model's own policy for the task's reward latent.
    Bfm,
}

fn default_n_transitions() -> usize {
    50_000
}
fn default_horizon() -> usize {
    100
}
fn default_methods() -> Vec<Method> {
    Method::ALL.to_vec()
}
fn default_n_expert_traj() -> usize {
    4
}
fn default_expert_temperature() -> f64 {
    0.1
}
fn default_n_eval_episodes() -> usize {
    100
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    pub env: EnvSpec,
    /// Task names to run; empty means every task of the environment.
    #[serde(default)]
    pub tasks: Vec<String>,
    #[serde(default)]
    pub pretrain: PretrainConfig,
    #[serde(default = "default_n_transitions")]
    pub n_transitions: usize,
    #[serde(default = "default_horizon")]
    pub exploration_horizon: usize,
    #[serde(default = "default_methods")]
    pub methods: Vec<Method>,
    #[serde(default)]
    pub fb_il: FbIlConfig,
    #[serde(default)]
    pub light: LightConfig,
    #[serde(default)]
    pub heavy: HeavyConfig,
    pub grid: Vec<PerturbationSpec>,
    #[serde(default = "default_n_expert_traj")]
    pub n_expert_traj: usize,
    #[serde(default = "default_horizon")]
    pub expert_horizon: usize,
    #[serde(default = "default_expert_temperature")]
    pub expert_temperature: f64,
    #[serde(default)]
    pub expert_source: ExpertSource,
    /// Monte-Carlo cross-check episodes per evaluation; 0 disables it.
    #[serde(default = "default_n_eval_episodes")]
    pub n_eval_episodes: usize,
    pub seeds: Vec<u64>,
}

impl SweepConfig {
    pub fn new(env: EnvSpec, grid: Vec<PerturbationSpec>, seeds: Vec<u64>) -> Self {
        Self {
            env,
            tasks: Vec::new(),
            pretrain: PretrainConfig::default(),
            n_transitions: default_n_transitions(),
            exploration_horizon: default_horizon(),
            methods: default_methods(),
            fb_il: FbIlConfig::default(),
            light: LightConfig::default(),
            heavy: HeavyConfig::default(),
            grid,
            n_expert_traj: default_n_expert_traj(),
            expert_horizon: default_horizon(),
            expert_temperature: default_expert_temperature(),
            expert_source: ExpertSource::default(),
            n_eval_episodes: default_n_eval_episodes(),
            seeds,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.grid.is_empty() || self.seeds.is_empty() || self.methods.is_empty() {
            return Err(Error::InvalidArgument("grid, seeds and methods must be nonempty".into()));
        }
        if self.n_expert_traj == 0 || self.expert_horizon == 0 {
            return Err(Error::InvalidArgument("expert data must be nonempty".into()));
        }
        if self.n_eval_episodes == 1 {
            return Err(Error::InvalidArgument("Monte-Carlo needs at least two episodes".into()));
        }
        Ok(())
    }
}

/// Where a kernel is handed to during a sweep. Only `Evaluation` may see a
/// perturbed kernel.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SweepStage {
    ExploratoryData,
    Expert,
    Evaluation,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalRow {
    pub env: String,
    pub task: String,
    pub method: Method,
    pub mode: String,
    pub magnitude: f64,
    pub seed: u64,
    pub return_exact: f64,
    pub return_mc: Option<f64>,
    pub mc_stderr: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub task: String,
    pub method: Method,
    pub mode: String,
    pub magnitude: f64,
    pub n_seeds: usize,
    pub mean: f64,
    /// `1.96 * stderr` across seeds.
    pub ci95: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub rows: Vec<EvalRow>,
    pub aggregates: Vec<Aggregate>,
}

pub const CSV_HEADER: [&str; 8] =
    ["env", "task", "method", "mode", "magnitude", "seed", "return_exact", "return_mc"];

impl EvalReport {
    fn from_rows(mut rows: Vec<EvalRow>) -> Self {
        rows.sort_by(|x, y| {
            x.task
                .cmp(&y.task)
                .then(x.method.as_str().cmp(y.method.as_str()))
                .then(x.mode.cmp(&y.mode))
                .then(x.magnitude.total_cmp(&y.magnitude))
                .then(x.seed.cmp(&y.seed))
        });
        let mut aggregates: Vec<Aggregate> = Vec::new();
        for chunk in rows.chunk_by(|x, y| {
            x.task == y.task && x.method == y.method && x.mode == y.mode && x.magnitude == y.magnitude
        }) {
            let n = chunk.len() as f64;
            let mean = chunk.iter().map(|r| r.return_exact).sum::<f64>() / n;
            let ci95 = if chunk.len() > 1 {
                let var = chunk.iter().map(|r| (r.return_exact - mean).powi(2)).sum::<f64>() / (n - 1.0);
                1.96 * (var / n).sqrt()
            } else {
                0.0
            };
            let first = &chunk[0];
            aggregates.push(Aggregate {
                task: first.task.clone(),
                method: first.method,
                mode: first.mode.clone(),
                magnitude: first.magnitude,
                n_seeds: chunk.len(),
                mean,
                ci95,
            });
        }
        Self { rows, aggregates }
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(CSV_HEADER)?;
        for r in &self.rows {
            w.write_record([
                r.env.clone(),
                r.task.clone(),
                r.method.to_string(),
                r.mode.clone(),
                r.magnitude.to_string(),
                r.seed.to_string(),
                r.return_exact.to_string(),
                r.return_mc.map(|x| x.to_string()).unwrap_or_default(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> Result<String> {
        let mut buf = Vec::new();
        self.write_csv(&mut buf)?;
        String::from_utf8(buf).map_err(|e| Error::InvalidArgument(e.to_string()))
    }

    /// Aggregate for one cell, if present.
    pub fn aggregate(&self, task: &str, method: Method, mode: &str, magnitude: f64) -> Option<&Aggregate> {
        self.aggregates
            .iter()
            .find(|a| a.task == task && a.method == method && a.mode == mode && a.magnitude == magnitude)
    }
}

/// FNV-1a, used to key child seeds by task name.
fn name_tag(name: &str) -> u64 {
    name.bytes()
        .fold(0xcbf2_9ce4_8422_2325, |h, b| (h ^ b as u64).wrapping_mul(0x0100_0000_01b3))
}

/// Exploratory data on the nominal MDP of `env` followed by pretraining.
/// The dataset draws from `config.seed.derive(1)`.
pub fn pretrain_on_env(
    env: &EnvSpec,
    n_transitions: usize,
    horizon: usize,
    config: &PretrainConfig,
) -> Result<(FbModel, TransitionDataset)> {
    let (mdp, _) = build_env(env)?;
    let dataset = generate_exploratory_dataset(&mdp, n_transitions, horizon, &mut config.seed.derive(1).rng())?;
    let model = pretrain(&dataset, config)?;
    Ok((model, dataset))
}

pub fn infer(method: Method, model: &FbModel, expert: &ExpertDataset, config: &SweepConfig, seed: RngSeed) -> Result<InferenceResult> {
    match method {
        Method::FbIl => infer_fb_il(model, expert, &FbIlConfig { seed, ..config.fb_il.clone() }),
        Method::RbfmLight => infer_rbfm_light(model, expert, &LightConfig { seed, ..config.light.clone() }),
        Method::RbfmHeavy => infer_rbfm_heavy(model, expert, &HeavyConfig { seed, ..config.heavy.clone() }),
    }
}

fn selected_tasks(config: &SweepConfig, all: &BTreeMap<String, RewardTable>) -> Result<Vec<RewardTable>> {
    if config.tasks.is_empty() {
        return Ok(all.values().cloned().collect());
    }
    config
        .tasks
        .iter()
        .map(|name| {
            all.get(name)
                .cloned()
                .ok_or_else(|| Error::BadSpec(format!("unknown task {name} for {}", config.env.name())))
        })
        .collect()
}

pub fn run_sweep(config: &SweepConfig) -> Result<EvalReport> {
    run_sweep_observed(config, &mut |_, _| {})
}

/// [`run_sweep`] reporting every kernel it hands to a data-generating or
/// evaluation stage.
pub fn run_sweep_observed(
    config: &SweepConfig,
    observe: &mut dyn FnMut(SweepStage, &TabularMdp),
) -> Result<EvalReport> {
    config.validate()?;
    let (nominal, all_tasks) = build_env(&config.env)?;
    let tasks = selected_tasks(config, &all_tasks)?;
    let mut rows = Vec::new();
    for &seed in &config.seeds {
        let base = RngSeed(seed);
        let pretrain_config = PretrainConfig { seed: base, ..config.pretrain.clone() };
        observe(SweepStage::ExploratoryData, &nominal);
        let (model, dataset) =
            pretrain_on_env(&config.env, config.n_transitions, config.exploration_horizon, &pretrain_config)?;
        log::info!("seed {seed}: pretrained on {} transitions", dataset.len());

        // one perturbed kernel per grid point, shared by all tasks and methods
        let kernels = config
            .grid
            .iter()
            .map(|p| {
                let spec = PerturbationSpec { seed: p.seed.derive(seed), ..p.clone() };
                perturb_kernel(&config.env, &nominal, &spec)
            })
            .collect::<Result<Vec<_>>>()?;

        for task in &tasks {
            let task_seed = base.derive(name_tag(&task.name));
            observe(SweepStage::Expert, &nominal);
            let mut expert_rng = task_seed.derive(1).rng();
            let expert = match config.expert_source {
                ExpertSource::ValueIteration => generate_expert(
                    &nominal,
                    task,
                    config.n_expert_traj,
                    config.expert_horizon,
                    config.expert_temperature,
                    &mut expert_rng,
                )?,
                ExpertSource::Bfm => {
                    let z = z_from_reward(&model, &dataset, task)?;
                    let policy = model.policy_from_latent(z.as_slice(), config.expert_temperature)?;
                    rollouts_of(&nominal, &policy, config.n_expert_traj, config.expert_horizon, &mut expert_rng)?
                }
            };
            for (m_idx, &method) in config.methods.iter().enumerate() {
                let method_seed = task_seed.derive(10 + m_idx as u64);
                let result = infer(method, &model, &expert, config, method_seed)?;
                let policy = model.policy_from_latent(result.z.as_slice(), model.temperature)?;
                for (g_idx, (spec, kernel)) in config.grid.iter().zip(&kernels).enumerate() {
                    observe(SweepStage::Evaluation, kernel);
                    let exact = evaluate_policy_exact(kernel, &policy, task)?;
                    let mc = if config.n_eval_episodes > 0 {
                        let mut rng = method_seed.derive(1000 + g_idx as u64).rng();
                        let est = evaluate_policy_mc(kernel, &policy, task, config.n_eval_episodes, &mut rng)?;
                        if !est.agrees_with(exact, 3.0) {
                            log::warn!(
                                "Monte-Carlo {:.4} +- {:.4} vs exact {:.4} ({} {} {} {})",
                                est.mean, est.stderr, exact, task.name, method, spec.mode, spec.magnitude
                            );
                        }
                        Some(est)
                    } else {
                        None
                    };
                    rows.push(EvalRow {
                        env: config.env.name().into(),
                        task: task.name.clone(),
                        method,
                        mode: spec.mode.to_string(),
                        magnitude: spec.magnitude,
                        seed,
                        return_exact: exact,
                        return_mc: mc.map(|e| e.mean),
                        mc_stderr: mc.map(|e| e.stderr),
                    });
                }
                log::info!("seed {seed} {} {method}: done", task.name);
            }
        }
    }
    Ok(EvalReport::from_rows(rows))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::PerturbMode;

    fn tiny_config() -> SweepConfig {
        let mut c = SweepConfig::new(
            EnvSpec::chain(5, 0.1),
            vec![
                PerturbationSpec::new(PerturbMode::UniformMix, 0.0),
                PerturbationSpec::new(PerturbMode::UniformMix, 0.5),
            ],
            vec![0, 1],
        );
        c.pretrain.steps = 50;
        c.pretrain.batch_size = 16;
        c.pretrain.d = 3;
        c.n_transitions = 500;
        c.fb_il.steps = 5;
        c.light.steps = 5;
        c.heavy.steps = 5;
        c.n_eval_episodes = 4;
        c.expert_horizon = 10;
        c
    }

    #[test]
    fn row_count_and_order() {
        let report = run_sweep(&tiny_config()).unwrap();
        assert_eq!(report.rows.len(), 3 * 2 * 2 * 2);
        assert_eq!(report.aggregates.len(), 3 * 2 * 2);
        let csv = report.to_csv_string().unwrap();
        assert!(csv.starts_with("env,task,method,mode,magnitude,seed,return_exact,return_mc\n"));
        let first = &report.rows[0];
        assert_eq!((first.task.as_str(), first.method, first.seed), ("left_end", Method::FbIl, 0));
    }

    #[test]
    fn unknown_task_is_bad_spec() {
        let mut c = tiny_config();
        c.tasks = vec!["nowhere".into()];
        assert!(matches!(run_sweep(&c), Err(Error::BadSpec(_))));
    }

    #[test]
    fn empty_grid_rejected() {
        let mut c = tiny_config();
        c.grid.clear();
        assert!(run_sweep(&c).is_err());
    }
}
