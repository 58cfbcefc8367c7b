use rbfm::fb::{pretrain, z_from_reward};
use rbfm::harness::{build_env, evaluate_policy_exact, generate_expert, generate_exploratory_dataset, EnvSpec};
use rbfm::inference::{infer_fb_il, infer_rbfm_heavy, infer_rbfm_light, ExpertDataset, FbIlConfig, HeavyConfig, LightConfig};
use rbfm::mdp::StochasticPolicy;
use rbfm::oracles::{check_fb_gradients, check_heavy_gradients};
use rbfm::{FbModel, PretrainConfig, RngSeed};

fn setup() -> (FbModel, ExpertDataset) {
    let (mdp, tasks) = build_env(&EnvSpec::four_rooms(7, 0.1)).unwrap();
    let data = generate_exploratory_dataset(&mdp, 4000, 50, &mut RngSeed(1).rng()).unwrap();
    let model = pretrain(&data, &PretrainConfig { d: 4, steps: 300, batch_size: 64, ..Default::default() }).unwrap();
    let expert = generate_expert(&mdp, &tasks["bottom_right"], 4, 40, 0.1, &mut RngSeed(2).rng()).unwrap();
    (model, expert)
}

#[test]
fn light_without_radius_reduces_to_fb_il() {
    let (model, expert) = setup();
    for seed in [0, 7, 123] {
        let fb = infer_fb_il(&model, &expert, &FbIlConfig { steps: 200, batch_size: 64, seed: RngSeed(seed), ..Default::default() }).unwrap();
        let light = infer_rbfm_light(
            &model,
            &expert,
            &LightConfig {
                eps_l: 0.0,
                pin_lambda: Some(0.0),
                steps: 200,
                batch_size: 64,
                lr: 1e-3,
                seed: RngSeed(seed),
            },
        )
        .unwrap();
        let bits = |v: &[f64]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(fb.z.as_slice()), bits(light.z.as_slice()));
        for (a, b) in fb.loss_trace.iter().zip(&light.loss_trace) {
            assert!((a - b).abs() <= 1e-14);
        }
    }
}

#[test]
fn inferred_latents_lie_on_sphere_and_are_reproducible() {
    let (model, expert) = setup();
    let d = model.d() as f64;
    let heavy = HeavyConfig { steps: 100, batch_size: 64, ..Default::default() };
    let a = infer_rbfm_heavy(&model, &expert, &heavy).unwrap();
    let b = infer_rbfm_heavy(&model, &expert, &heavy).unwrap();
    assert_eq!(a, b);
    assert!((a.z.norm() - d.sqrt()).abs() < 1e-8);
    assert!(a.tau_trace.as_ref().unwrap().iter().all(|&t| t >= 0.0));
    let light = infer_rbfm_light(&model, &expert, &LightConfig { steps: 100, ..Default::default() }).unwrap();
    assert!((light.z.norm() - d.sqrt()).abs() < 1e-8);
    assert!(light.lambda_trace.as_ref().unwrap().iter().all(|&l| l >= 0.0));
}

#[test]
fn analytic_gradients_match_finite_differences() {
    // TD loss gradients are held to the tighter bound
    let fb = check_fb_gradients(10, &mut RngSeed(40).rng()).unwrap();
    assert!(fb.max_violation <= 1e-4, "{}", fb.summary_line());
    let heavy = check_heavy_gradients(10, &mut RngSeed(41).rng()).unwrap();
    assert!(heavy.passed, "{}", heavy.summary_line());
}

#[test]
fn pretrained_reward_latent_beats_uniform_policy() {
    let (mdp, tasks) = build_env(&EnvSpec::chain(8, 0.1)).unwrap();
    let data = generate_exploratory_dataset(&mdp, 10_000, 50, &mut RngSeed(3).rng()).unwrap();
    let model = pretrain(&data, &PretrainConfig { d: 4, steps: 3000, batch_size: 64, ..Default::default() }).unwrap();
    let uniform = StochasticPolicy::uniform(8, 2);
    for reward in tasks.values() {
        let z = z_from_reward(&model, &data, reward).unwrap();
        let policy = model.policy_from_latent(z.as_slice(), model.temperature).unwrap();
        let got = evaluate_policy_exact(&mdp, &policy, reward).unwrap();
        let base = evaluate_policy_exact(&mdp, &uniform, reward).unwrap();
        assert!(got > base, "{}: {got} vs uniform {base}", reward.name);
    }
}
