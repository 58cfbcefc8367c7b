use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::env::{build_env, EnvSpec};
use crate::error::{Error, Result};
use crate::mdp::TabularMdp;
use crate::oracles::random_kernel_in_tv_ball;
use crate::rng::RngSeed;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PerturbMode {
    SlipShift,
    UniformMix,
    TvAdversarial,
}

impl PerturbMode {
    pub fn as_str(self) -> &'static str {
        match self {
            PerturbMode::SlipShift => "slip_shift",
            PerturbMode::UniformMix => "uniform_mix",
            PerturbMode::TvAdversarial => "tv_adversarial",
        }
    }

    /// Largest admissible magnitude. For `slip_shift` the bound is exclusive
    /// and depends on the base slip.
    pub fn max_magnitude(self, base_slip: f64) -> f64 {
        match self {
            PerturbMode::SlipShift => 1.0 - base_slip,
            PerturbMode::UniformMix | PerturbMode::TvAdversarial => 1.0,
        }
    }
}

impl fmt::Display for PerturbMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PerturbMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "slip_shift" => Ok(PerturbMode::SlipShift),
            "uniform_mix" => Ok(PerturbMode::UniformMix),
            "tv_adversarial" => Ok(PerturbMode::TvAdversarial),
            other => Err(Error::InvalidArgument(format!("unknown perturbation mode {other}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PerturbationSpec {
    pub mode: PerturbMode,
    pub magnitude: f64,
    /// Only used by `tv_adversarial`.
    #[serde(default)]
    pub seed: RngSeed,
}

impl PerturbationSpec {
    pub fn new(mode: PerturbMode, magnitude: f64) -> Self {
        Self { mode, magnitude, seed: RngSeed(0) }
    }

    pub fn nominal() -> Self {
        Self::new(PerturbMode::TvAdversarial, 0.0)
    }
}

/// Parses `mode:magnitude[:seed]`.
impl FromStr for PerturbationSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split(':').collect();
        if !(2..=3).contains(&parts.len()) {
            return Err(Error::InvalidArgument(format!("expected mode:magnitude[:seed], got {s}")));
        }
        let mode = parts[0].parse()?;
        let magnitude = parts[1]
            .parse()
            .map_err(|_| Error::InvalidArgument(format!("bad magnitude {}", parts[1])))?;
        let seed = match parts.get(2) {
            Some(p) => RngSeed(p.parse().map_err(|_| Error::InvalidArgument(format!("bad seed {p}")))?),
            None => RngSeed(0),
        };
        Ok(Self { mode, magnitude, seed })
    }
}

/// Six evenly spaced magnitudes from 0 up to the mode's maximum (kept just
/// below it for `slip_shift`).
pub fn default_grid(mode: PerturbMode, base_slip: f64) -> Vec<PerturbationSpec> {
    let top = match mode {
        PerturbMode::SlipShift => 0.9 * (1.0 - base_slip),
        _ => mode.max_magnitude(base_slip),
    };
    (0..6).map(|k| PerturbationSpec::new(mode, top * k as f64 / 5.0)).collect()
}

/// Perturbed copy of `nominal`, the MDP built from `env`.
pub fn perturb_kernel(env: &EnvSpec, nominal: &TabularMdp, spec: &PerturbationSpec) -> Result<TabularMdp> {
    let m = spec.magnitude;
    let bad = || Error::BadMagnitude { mode: spec.mode.as_str().into(), magnitude: m };
    if !(m >= 0.0) {
        return Err(bad());
    }
    match spec.mode {
        PerturbMode::SlipShift => {
            if env.slip + m >= 1.0 {
                return Err(bad());
            }
            if m == 0.0 {
                return Ok(nominal.clone());
            }
            Ok(build_env(&env.with_slip(env.slip + m))?.0)
        }
        PerturbMode::UniformMix => {
            if m > 1.0 {
                return Err(bad());
            }
            if m == 0.0 {
                return Ok(nominal.clone());
            }
            let u = 1.0 / nominal.n_states() as f64;
            let kernel = nominal.kernel().iter().map(|&p| (1.0 - m) * p + m * u).collect();
            nominal.with_kernel(kernel)
        }
        PerturbMode::TvAdversarial => {
            if m > 1.0 {
                return Err(bad());
            }
            if m == 0.0 {
                return Ok(nominal.clone());
            }
            random_kernel_in_tv_ball(nominal, m, &mut spec.seed.rng())
        }
    }
}
