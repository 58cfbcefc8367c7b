//! Environments, datasets, perturbations and the evaluation sweep.
//!
//! Pretraining, expert generation and inference only ever see the nominal
//! kernel; perturbed kernels exist only inside evaluation.

mod data;
mod env;
mod eval;
mod perturb;
mod sweep;

pub use data::{expert_policy, generate_expert, generate_exploratory_dataset};
pub use env::{build_env, grid_cells, EnvFamily, EnvSpec};
pub use eval::{evaluate_policy_exact, evaluate_policy_mc, mc_horizon, MonteCarloEstimate};
pub use perturb::{default_grid, perturb_kernel, PerturbMode, PerturbationSpec};
pub use sweep::{
    infer, pretrain_on_env, run_sweep, run_sweep_observed, Aggregate, EvalReport, EvalRow,
    ExpertSource, SweepConfig, SweepStage, CSV_HEADER,
};
