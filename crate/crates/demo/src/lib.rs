//! Browser bindings for three small interactive views: the Light dual as a
//! function of `lambda`, the SoftTV optimal weight as a function of the
//! advantage `c`, and the state occupancy of an expert on a perturbed
//! four-rooms kernel.

use rbfm::harness::{
    build_env, evaluate_policy_exact, expert_policy, grid_cells, perturb_kernel, EnvSpec,
    PerturbMode, PerturbationSpec,
};
use rbfm::inference::{light_dual_value, light_minimize_lambda, optimal_weight};
use rbfm::occupancy::state_occupancy;
use rbfm::{HeavyConfig, RngSeed};
use wasm_bindgen::prelude::*;

fn check_weights(losses: &[f64], weights: &[f64]) -> Result<(), String> {
    if losses.is_empty() || losses.len() != weights.len() {
        return Err("losses and weights must be non-empty and of equal length".into());
    }
    if losses.iter().chain(weights).any(|x| !x.is_finite() || *x < 0.0) {
        return Err("losses and weights must be finite and non-negative".into());
    }
    if weights.iter().sum::<f64>() <= 0.0 {
        return Err("weights must not all be zero".into());
    }
    Ok(())
}

/// Light dual evaluated at `points` evenly spaced `lambda` in `[0, max L]`.
/// Weights are normalized first.
#[wasm_bindgen]
pub fn light_dual_curve(
    losses: &[f64],
    weights: &[f64],
    eps_l: f64,
    points: usize,
) -> Result<Vec<f64>, String> {
    check_weights(losses, weights)?;
    let total: f64 = weights.iter().sum();
    let w: Vec<f64> = weights.iter().map(|x| x / total).collect();
    let top = losses.iter().copied().fold(0.0, f64::max);
    let points = points.max(2);
    Ok((0..points)
        .map(|i| light_dual_value(losses, &w, eps_l, top * i as f64 / (points - 1) as f64))
        .collect())
}

/// `[lambda*, value]` from the exact breakpoint sweep.
#[wasm_bindgen]
pub fn light_optimum(losses: &[f64], weights: &[f64], eps_l: f64) -> Result<Vec<f64>, String> {
    check_weights(losses, weights)?;
    let total: f64 = weights.iter().sum();
    let w: Vec<f64> = weights.iter().map(|x| x / total).collect();
    let (lambda, value) = light_minimize_lambda(losses, &w, eps_l);
    Ok(vec![lambda, value])
}

/// Optimal SoftTV weight `w*(c, tau)` at `points` evenly spaced `c` in
/// `[c_min, c_max]`, with the default clip and cap.
#[wasm_bindgen]
pub fn soft_tv_weight_curve(tau: f64, c_min: f64, c_max: f64, points: usize) -> Vec<f64> {
    let config = HeavyConfig::default();
    let points = points.max(2);
    (0..points)
        .map(|i| {
            let c = c_min + (c_max - c_min) * i as f64 / (points - 1) as f64;
            optimal_weight(c, tau, &config)
        })
        .collect()
}

/// Expert occupancy on a four-rooms grid under a TV-adversarial kernel.
#[wasm_bindgen]
pub struct OccupancyMap {
    size: usize,
    cells: Vec<f64>,
    value: f64,
}

#[wasm_bindgen]
impl OccupancyMap {
    #[wasm_bindgen(getter)]
    pub fn size(&self) -> usize {
        self.size
    }

    /// Row-major `size x size`; walls are `-1`.
    #[wasm_bindgen(getter)]
    pub fn cells(&self) -> Vec<f64> {
        self.cells.clone()
    }

    /// Exact discounted return of the expert on the perturbed kernel.
    #[wasm_bindgen(getter)]
    pub fn value(&self) -> f64 {
        self.value
    }
}

#[wasm_bindgen]
pub fn four_rooms_occupancy(
    size: usize,
    slip: f64,
    task: &str,
    magnitude: f64,
    seed: u64,
) -> Result<OccupancyMap, String> {
    let spec = EnvSpec::four_rooms(size, slip);
    let (nominal, tasks) = build_env(&spec).map_err(|e| e.to_string())?;
    let reward = tasks.get(task).ok_or_else(|| format!("unknown task {task:?}"))?;
    // expert is fitted to the nominal kernel and then run on the perturbed one
    let policy = expert_policy(&nominal, reward, 0.1).map_err(|e| e.to_string())?;
    let perturbation = PerturbationSpec {
        mode: PerturbMode::TvAdversarial,
        magnitude,
        seed: RngSeed(seed),
    };
    let mdp = perturb_kernel(&spec, &nominal, &perturbation).map_err(|e| e.to_string())?;
    let rho = state_occupancy(&mdp, &policy).map_err(|e| e.to_string())?.rho;
    let value = evaluate_policy_exact(&mdp, &policy, reward).map_err(|e| e.to_string())?;
    let mut cells = vec![-1.0; size * size];
    for (&(r, c), &p) in grid_cells(&spec).expect("four rooms is a grid").iter().zip(&rho) {
        cells[r * size + c] = p;
    }
    Ok(OccupancyMap { size, cells, value })
}
