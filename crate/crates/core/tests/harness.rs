use std::collections::VecDeque;

use rbfm::harness::{
    build_env, evaluate_policy_exact, evaluate_policy_mc, expert_policy, grid_cells,
    run_sweep, run_sweep_observed, EnvSpec, PerturbMode, PerturbationSpec, SweepConfig,
    SweepStage,
};
use rbfm::inference::Method;
use rbfm::mdp::{value_iteration, StochasticPolicy, TabularMdp};
use rbfm::occupancy::triple_occupancy;
use rbfm::RngSeed;

fn small_sweep(grid: Vec<PerturbationSpec>) -> SweepConfig {
    let mut c = SweepConfig::new(EnvSpec::four_rooms(7, 0.1), grid, vec![3, 4]);
    c.tasks = vec!["top_left".into()];
    c.pretrain.steps = 100;
    c.pretrain.batch_size = 32;
    c.pretrain.d = 4;
    c.n_transitions = 3000;
    c.fb_il.steps = 20;
    c.light.steps = 20;
    c.heavy.steps = 20;
    c.n_eval_episodes = 10;
    c.expert_horizon = 20;
    c
}

#[test]
fn only_evaluation_sees_perturbed_kernels() {
    let grid = vec![
        PerturbationSpec::new(PerturbMode::TvAdversarial, 0.0),
        PerturbationSpec::new(PerturbMode::TvAdversarial, 0.3),
        PerturbationSpec::new(PerturbMode::UniformMix, 0.5),
        PerturbationSpec::new(PerturbMode::SlipShift, 0.4),
    ];
    let config = small_sweep(grid);
    let (nominal, _) = build_env(&config.env).unwrap();
    let mut seen: Vec<(SweepStage, TabularMdp)> = Vec::new();
    run_sweep_observed(&config, &mut |stage, mdp| seen.push((stage, mdp.clone()))).unwrap();

    let (train, eval): (Vec<_>, Vec<_>) =
        seen.iter().partition(|(stage, _)| *stage != SweepStage::Evaluation);
    assert!(!train.is_empty());
    for (stage, mdp) in &train {
        assert_eq!(mdp.kernel(), nominal.kernel(), "{stage:?} received a perturbed kernel");
        assert_eq!(mdp.mu(), nominal.mu());
    }
    // the perturbed kernels do reach evaluation
    let perturbed = eval.iter().filter(|(_, m)| m.kernel() != nominal.kernel()).count();
    assert_eq!(perturbed, 3 * 3 * 2);
}

#[test]
fn sweep_rows_and_bytes_are_stable() {
    let grid = vec![
        PerturbationSpec::new(PerturbMode::TvAdversarial, 0.0),
        PerturbationSpec::new(PerturbMode::TvAdversarial, 0.2),
    ];
    let config = small_sweep(grid);
    let a = run_sweep(&config).unwrap();
    let b = run_sweep(&config).unwrap();
    assert_eq!(a.rows.len(), Method::ALL.len() * 2 * 2);
    assert_eq!(a.to_csv_string().unwrap(), b.to_csv_string().unwrap());
    let keys: Vec<_> = a
        .rows
        .iter()
        .map(|r| (r.task.clone(), r.method.to_string(), r.mode.clone(), r.magnitude, r.seed))
        .collect();
    let mut sorted = keys.clone();
    sorted.sort_by(|x, y| x.partial_cmp(y).unwrap());
    assert_eq!(keys, sorted);
    for agg in &a.aggregates {
        assert_eq!(agg.n_seeds, 2);
        assert!(agg.ci95 >= 0.0);
    }
}

#[test]
fn nominal_only_grid_evaluates_on_nominal() {
    let config = small_sweep(vec![PerturbationSpec::nominal()]);
    let report = run_sweep(&config).unwrap();
    assert!(report.rows.iter().all(|r| r.magnitude == 0.0));
    assert_eq!(report.rows.len(), 3 * 2);
}

/// BFS distance from every free cell to `goal` over the grid moves.
fn bfs_distances(spec: &EnvSpec, mdp: &TabularMdp, goal: usize) -> Vec<usize> {
    assert_eq!(grid_cells(spec).unwrap().len(), mdp.n_states());
    let n = mdp.n_states();
    let mut dist = vec![usize::MAX; n];
    dist[goal] = 0;
    let mut queue = VecDeque::from([goal]);
    while let Some(t) = queue.pop_front() {
        // predecessors of t under deterministic moves
        for s in 0..n {
            for a in 0..mdp.n_actions() {
                if mdp.row(s, a)[t] == 1.0 && dist[s] == usize::MAX {
                    dist[s] = dist[t] + 1;
                    queue.push_back(s);
                }
            }
        }
    }
    dist
}

#[test]
fn four_rooms_values_decrease_with_distance() {
    let spec = EnvSpec::four_rooms(11, 0.0);
    let (mdp, tasks) = build_env(&spec).unwrap();
    for reward in tasks.values() {
        let goal = reward.r.iter().position(|&r| r == 1.0).unwrap();
        let dist = bfs_distances(&spec, &mdp, goal);
        assert!(dist.iter().all(|&d| d != usize::MAX));
        let (v, _) = value_iteration(&mdp, reward, 1e-12).unwrap();
        for s in 0..mdp.n_states() {
            for t in 0..mdp.n_states() {
                // the goal and its neighbours tie: both collect from the next step on
                if dist[s].max(1) < dist[t].max(1) {
                    assert!(v[s] > v[t], "{}: d {} vs {}", reward.name, dist[s], dist[t]);
                }
            }
            // first reward arrives at step d - 1, then every step from the corner
            let expected = mdp.gamma().powi(dist[s].max(1) as i32 - 1) / (1.0 - mdp.gamma());
            assert!((v[s] - expected).abs() < 1e-8, "{} {}", v[s], expected);
        }
    }
}

#[test]
fn expert_beats_uniform_on_every_task() {
    for spec in [EnvSpec::chain(7, 0.1), EnvSpec::cliff(6, 3, 0.1), EnvSpec::four_rooms(11, 0.1)] {
        let (mdp, tasks) = build_env(&spec).unwrap();
        let uniform = StochasticPolicy::uniform(mdp.n_states(), mdp.n_actions());
        for reward in tasks.values() {
            let expert = expert_policy(&mdp, reward, 0.1).unwrap();
            let e = evaluate_policy_exact(&mdp, &expert, reward).unwrap();
            let u = evaluate_policy_exact(&mdp, &uniform, reward).unwrap();
            assert!(e >= u, "{} {}: {e} < {u}", spec.name(), reward.name);
        }
    }
}

#[test]
fn exact_return_matches_triple_occupancy() {
    let spec = EnvSpec::cliff(5, 3, 0.2);
    let (mdp, tasks) = build_env(&spec).unwrap();
    let reward = &tasks["goal"];
    let policy = expert_policy(&mdp, reward, 0.5).unwrap();
    let rho = triple_occupancy(&mdp, &policy).unwrap();
    let mut expected = 0.0;
    for s in 0..mdp.n_states() {
        for a in 0..mdp.n_actions() {
            for t in 0..mdp.n_states() {
                expected += rho.get(s, a, t) * reward.r[t];
            }
        }
    }
    expected /= 1.0 - mdp.gamma();
    let exact = evaluate_policy_exact(&mdp, &policy, reward).unwrap();
    assert!((exact - expected).abs() < 1e-9 * expected.abs().max(1.0));
}

#[test]
fn exact_return_matches_long_monte_carlo() {
    let spec = EnvSpec { gamma: 0.9, ..EnvSpec::chain(5, 0.2) };
    let (mdp, tasks) = build_env(&spec).unwrap();
    let reward = &tasks["right_end"];
    let policy = expert_policy(&mdp, reward, 1.0).unwrap();
    let exact = evaluate_policy_exact(&mdp, &policy, reward).unwrap();
    let mc = evaluate_policy_mc(&mdp, &policy, reward, 100_000, &mut RngSeed(11).rng()).unwrap();
    assert!(mc.agrees_with(exact, 3.0), "{mc:?} vs {exact}");
}
