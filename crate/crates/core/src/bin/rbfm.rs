use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde::{Deserialize, Serialize};

use rbfm::fb::{FbModel, ModelDocument, PretrainConfig};
use rbfm::harness::{
    build_env, evaluate_policy_exact, evaluate_policy_mc, generate_expert, perturb_kernel,
    pretrain_on_env, run_sweep, EnvSpec, PerturbationSpec, SweepConfig,
};
use rbfm::inference::{
    infer_fb_il, infer_rbfm_heavy, infer_rbfm_light, ExpertDataset, ExpertDocument,
    InferenceResult, Method,
};
use rbfm::oracles::{run_suite, Suite};
use rbfm::{Error, Result, RngSeed};

#[derive(Parser)]
#[command(name = "rbfm", version, about = "Robust imitation on tabular forward-backward models")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Collect exploratory data on the nominal environment and pretrain a model.
    Pretrain {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Roll out the value-iteration expert for one task.
    Expert {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Infer a task latent from demonstrations.
    Infer {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        expert: PathBuf,
        #[arg(long)]
        method: Method,
        /// Method hyperparameters as JSON; defaults when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Exact (and optionally Monte-Carlo) return of a latent's policy.
    Eval {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        z: PathBuf,
        /// `mode:magnitude[:seed]`.
        #[arg(long, default_value = "tv_adversarial:0")]
        perturb: PerturbationSpec,
        #[arg(long)]
        task: String,
        /// Environment JSON, when the checkpoint does not carry one.
        #[arg(long)]
        env: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        episodes: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Full pretrain, infer, perturb and evaluate sweep, written as CSV.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Also write rows and aggregates as JSON.
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Run the oracle checks and write one JSON report per check.
    Verify {
        #[arg(long, default_value = "all")]
        suite: Suite,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

fn default_n_transitions() -> usize {
    50_000
}
fn default_horizon() -> usize {
    100
}

#[derive(Serialize, Deserialize)]
struct PretrainJob {
    env: EnvSpec,
    #[serde(default)]
    pretrain: PretrainConfig,
    #[serde(default = "default_n_transitions")]
    n_transitions: usize,
    #[serde(default = "default_horizon")]
    exploration_horizon: usize,
}

fn default_n_traj() -> usize {
    4
}
fn default_temperature() -> f64 {
    0.1
}

#[derive(Serialize, Deserialize)]
struct ExpertJob {
    env: EnvSpec,
    task: String,
    #[serde(default = "default_n_traj")]
    n_traj: usize,
    #[serde(default = "default_horizon")]
    horizon: usize,
    #[serde(default = "default_temperature")]
    temperature: f64,
    #[serde(default)]
    seed: RngSeed,
}

#[derive(Serialize, Deserialize)]
struct EvalOutput {
    env: String,
    task: String,
    method: Method,
    mode: String,
    magnitude: f64,
    seed: RngSeed,
    return_exact: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    return_mc: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    mc_stderr: Option<f64>,
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

fn load_model(path: &Path) -> Result<(FbModel, Option<EnvSpec>)> {
    let doc: ModelDocument = read_json(path)?;
    let env = doc.env.clone().map(serde_json::from_value).transpose()?;
    Ok((FbModel::from_document(&doc)?, env))
}

fn pretrain_cmd(config: &Path, out: &Path) -> Result<()> {
    let job: PretrainJob = read_json(config)?;
    let (model, _) = pretrain_on_env(&job.env, job.n_transitions, job.exploration_horizon, &job.pretrain)?;
    let mut doc = model.to_document();
    doc.env = Some(serde_json::to_value(&job.env)?);
    write_json(out, &doc)
}

fn expert_cmd(config: &Path, out: &Path) -> Result<()> {
    let job: ExpertJob = read_json(config)?;
    let (mdp, tasks) = build_env(&job.env)?;
    let task = tasks
        .get(&job.task)
        .ok_or_else(|| Error::BadSpec(format!("unknown task {}", job.task)))?;
    let expert = generate_expert(&mdp, task, job.n_traj, job.horizon, job.temperature, &mut job.seed.rng())?;
    write_json(out, &expert.to_document())
}

fn infer_cmd(model: &Path, expert: &Path, method: Method, config: Option<&Path>, out: &Path) -> Result<()> {
    let (model, _) = load_model(model)?;
    let expert = ExpertDataset::from_document(read_json::<ExpertDocument>(expert)?)?;
    let raw = match config {
        Some(p) => read_json::<serde_json::Value>(p)?,
        None => serde_json::json!({}),
    };
    let result = match method {
        Method::FbIl => infer_fb_il(&model, &expert, &serde_json::from_value(raw)?)?,
        Method::RbfmLight => infer_rbfm_light(&model, &expert, &serde_json::from_value(raw)?)?,
        Method::RbfmHeavy => infer_rbfm_heavy(&model, &expert, &serde_json::from_value(raw)?)?,
    };
    write_json(out, &result)
}

#[allow(clippy::too_many_arguments)]
fn eval_cmd(
    model: &Path,
    z: &Path,
    perturb: &PerturbationSpec,
    task: &str,
    env: Option<&Path>,
    episodes: usize,
    out: Option<&Path>,
) -> Result<()> {
    let (model, stored_env) = load_model(model)?;
    let env = match env {
        Some(p) => read_json(p)?,
        None => stored_env.ok_or_else(|| {
            Error::InvalidArgument("checkpoint has no env; pass --env".into())
        })?,
    };
    let result: InferenceResult = read_json(z)?;
    let (nominal, tasks) = build_env(&env)?;
    let reward = tasks
        .get(task)
        .ok_or_else(|| Error::BadSpec(format!("unknown task {task}")))?;
    let mdp = perturb_kernel(&env, &nominal, perturb)?;
    let policy = model.policy_from_latent(result.z.as_slice(), model.temperature)?;
    let exact = evaluate_policy_exact(&mdp, &policy, reward)?;
    let mc = if episodes > 0 {
        Some(evaluate_policy_mc(&mdp, &policy, reward, episodes, &mut perturb.seed.derive(1).rng())?)
    } else {
        None
    };
    let output = EvalOutput {
        env: env.name().into(),
        task: task.into(),
        method: result.method,
        mode: perturb.mode.to_string(),
        magnitude: perturb.magnitude,
        seed: perturb.seed,
        return_exact: exact,
        return_mc: mc.map(|e| e.mean),
        mc_stderr: mc.map(|e| e.stderr),
    };
    match out {
        Some(p) => write_json(p, &output),
        None => {
            println!("{}", serde_json::to_string_pretty(&output)?);
            Ok(())
        }
    }
}

fn sweep_cmd(config: &Path, out: &Path, report: Option<&Path>) -> Result<()> {
    let config: SweepConfig = read_json(config)?;
    let result = run_sweep(&config)?;
    result.write_csv(fs::File::create(out)?)?;
    if let Some(p) = report {
        write_json(p, &result)?;
    }
    Ok(())
}

/// Returns whether every check passed.
fn verify_cmd(suite: Suite, out: &Path, seed: u64) -> Result<bool> {
    fs::create_dir_all(out)?;
    let reports = run_suite(suite, RngSeed(seed))?;
    let mut summary = String::new();
    for r in &reports {
        write_json(&out.join(format!("{}.json", r.name)), r)?;
        summary.push_str(&r.summary_line());
        summary.push('\n');
    }
    fs::write(out.join("summary.txt"), &summary)?;
    print!("{summary}");
    Ok(reports.iter().all(|r| r.passed))
}

fn run(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::Pretrain { config, out } => pretrain_cmd(&config, &out).map(|_| true),
        Command::Expert { config, out } => expert_cmd(&config, &out).map(|_| true),
        Command::Infer { model, expert, method, config, out } => {
            infer_cmd(&model, &expert, method, config.as_deref(), &out).map(|_| true)
        }
        Command::Eval { model, z, perturb, task, env, episodes, out } => {
            eval_cmd(&model, &z, &perturb, &task, env.as_deref(), episodes, out.as_deref()).map(|_| true)
        }
        Command::Sweep { config, out, report } => sweep_cmd(&config, &out, report.as_deref()).map(|_| true),
        Command::Verify { suite, out, seed } => verify_cmd(suite, &out, seed),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
