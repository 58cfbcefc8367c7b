use std::str::FromStr;

use super::{
    check_bellman_flow, check_fb_gradients, check_heavy_gradients, check_prop1_duality,
    check_prop2_interval, check_prop3_closed_form, check_softtv_identities, duality_gap_suite,
    lemma_suite, CheckReport, DualityGapConfig, LemmaKind,
};
use crate::error::{Error, Result};
use crate::rng::RngSeed;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Suite {
    /// Occupancy perturbation bounds.
    Lemmas,
    /// Dual forms, closed-form weights, flow and gradient checks.
    Props,
    /// Everything above plus the duality-gap check.
    All,
}

impl FromStr for Suite {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "lemmas" => Ok(Suite::Lemmas),
            "props" => Ok(Suite::Props),
            "all" => Ok(Suite::All),
            other => Err(Error::InvalidArgument(format!("unknown suite {other}"))),
        }
    }
}

pub fn lemma_checks(seed: RngSeed) -> Result<Vec<CheckReport>> {
    [LemmaKind::State, LemmaKind::StateAction, LemmaKind::Triple]
        .iter()
        .enumerate()
        .map(|(i, &kind)| lemma_suite(kind, 200, 5, seed.derive(i as u64)))
        .collect()
}

pub fn prop_checks(seed: RngSeed) -> Result<Vec<CheckReport>> {
    Ok(vec![
        check_prop1_duality(1000, &mut seed.derive(10).rng()),
        check_prop2_interval(500, &mut seed.derive(11).rng()),
        check_prop3_closed_form(1000, 10.0, 1e-3, &mut seed.derive(12).rng()),
        check_softtv_identities()?,
        check_bellman_flow(100, &mut seed.derive(13).rng())?,
        check_fb_gradients(50, &mut seed.derive(14).rng())?,
        check_heavy_gradients(50, &mut seed.derive(15).rng())?,
    ])
}

pub fn duality_checks(seed: RngSeed) -> Result<Vec<CheckReport>> {
    Ok(vec![duality_gap_suite(10, &[0.1, 0.3], seed.derive(20), &DualityGapConfig::default())?])
}

pub fn run_suite(suite: Suite, seed: RngSeed) -> Result<Vec<CheckReport>> {
    let mut out = Vec::new();
    if matches!(suite, Suite::Lemmas | Suite::All) {
        out.extend(lemma_checks(seed)?);
    }
    if matches!(suite, Suite::Props | Suite::All) {
        out.extend(prop_checks(seed)?);
    }
    if suite == Suite::All {
        out.extend(duality_checks(seed)?);
    }
    Ok(out)
}
