//! Robust offline imitation on top of a tabular forward-backward behavior
//! foundation model.
//!
//! The crate is organised bottom-up:
//!
//! - [`mdp`]: finite MDPs, rollouts, value iteration and softmax policies.
//! - [`occupancy`]: exact discounted occupancies, successor measures and
//!   Bellman-flow residuals.
//! - [`fb`]: the forward-backward model, its TD loss with analytic
//!   gradients and the pretraining loop.
//! - [`inference`]: task-vector inference from demonstrations (FB-IL,
//!   RBFM-Light, RBFM-Heavy).
//! - [`oracles`]: brute-force verifiers for the occupancy bounds and the
//!   duality results the inference methods rely on.
//! - [`harness`]: environments, perturbation sweeps and evaluation.

pub mod error;
pub mod fb;
pub mod harness;
pub mod inference;
pub mod mdp;
pub mod occupancy;
pub mod optim;
pub mod oracles;
pub mod rng;

pub use error::{Error, Result};
pub use fb::{FbModel, LatentVector, PretrainConfig, Transition, TransitionDataset};
pub use inference::{ExpertDataset, HeavyConfig, HeavyDualState, LightConfig};
pub use mdp::{RewardTable, SaTable, StochasticPolicy, TabularMdp, Trajectory};
pub use occupancy::{OccupancyTriple, StateOccupancy, SuccessorMeasure};
pub use rng::RngSeed;
