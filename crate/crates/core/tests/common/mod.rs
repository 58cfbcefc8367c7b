#![allow(dead_code)]

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

pub const BIN: &str = env!("CARGO_BIN_EXE_rbfm");

pub fn rbfm(dir: &Path, args: &[&str]) -> Output {
    Command::new(BIN)
        .args(args)
        .current_dir(dir)
        .output()
        .expect("binary runs")
}

const PRETRAIN: &str = r#"{"env":{"family":"four_rooms","size":7,"slip":0.1},
 "pretrain":{"d":4,"steps":200,"batch_size":32,"seed":5},"n_transitions":3000}"#;
const EXPERT: &str = r#"{"env":{"family":"four_rooms","size":7,"slip":0.1},"task":"top_left","horizon":30,"seed":2}"#;
const INFER: &str = r#"{"steps":40,"batch_size":64,"seed":9}"#;
const SWEEP: &str = r#"{"env":{"family":"chain","n":6,"slip":0.1},
 "pretrain":{"d":3,"steps":100,"batch_size":16},"n_transitions":1000,
 "fb_il":{"steps":10},"light":{"steps":10},"heavy":{"steps":10},
 "grid":[{"mode":"tv_adversarial","magnitude":0.0},{"mode":"tv_adversarial","magnitude":0.2,"seed":1}],
 "expert_horizon":15,"n_eval_episodes":5,"seeds":[0,1]}"#;

/// Every subcommand run twice in `dir` on the same inputs; one
/// `(subcommand, identical, exit code success)` entry each.
pub fn determinism_runs(dir: &Path) -> Vec<(String, bool, bool)> {
    fs::write(dir.join("pretrain.json"), PRETRAIN).unwrap();
    fs::write(dir.join("expert.json"), EXPERT).unwrap();
    fs::write(dir.join("infer.json"), INFER).unwrap();
    fs::write(dir.join("sweep.json"), SWEEP).unwrap();

    let mut out = Vec::new();
    let mut twice = |name: &str, args: &dyn Fn(&str) -> Vec<String>, artifact: &dyn Fn(&str) -> String| {
        let mut results = Vec::new();
        let mut ok = true;
        for run in ["a", "b"] {
            let a = args(run);
            let refs: Vec<&str> = a.iter().map(String::as_str).collect();
            let o = rbfm(dir, &refs);
            ok &= o.status.success();
            let path = artifact(run);
            let bytes = if path.is_empty() { o.stdout.clone() } else { fs::read(dir.join(&path)).unwrap_or_default() };
            results.push(bytes);
        }
        out.push((name.to_string(), !results[0].is_empty() && results[0] == results[1], ok));
    };
    let s = |v: &[&str]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>();

    twice("pretrain", &|r| s(&["pretrain", "--config", "pretrain.json", "--out", &format!("model_{r}.json")]), &|r| format!("model_{r}.json"));
    twice("expert", &|r| s(&["expert", "--config", "expert.json", "--out", &format!("demo_{r}.json")]), &|r| format!("demo_{r}.json"));
    for method in ["fb_il", "rbfm_light", "rbfm_heavy"] {
        twice(
            &format!("infer {method}"),
            &|r| s(&["infer", "--model", "model_a.json", "--expert", "demo_a.json", "--method", method, "--config", "infer.json", "--out", &format!("z_{method}_{r}.json")]),
            &|r| format!("z_{method}_{r}.json"),
        );
    }
    twice(
        "eval",
        &|r| s(&["eval", "--model", "model_a.json", "--z", "z_rbfm_heavy_a.json", "--perturb", "tv_adversarial:0.2:3", "--task", "top_left", "--episodes", "50", "--out", &format!("eval_{r}.json")]),
        &|r| format!("eval_{r}.json"),
    );
    twice("sweep", &|r| s(&["sweep", "--config", "sweep.json", "--out", &format!("sweep_{r}.csv")]), &|r| format!("sweep_{r}.csv"));
    twice("verify", &|r| s(&["verify", "--suite", "lemmas", "--out", &format!("verify_{r}")]), &|r| format!("verify_{r}/summary.txt"));
    let same_reports = ["lemma_state", "lemma_sa", "lemma_triple"].iter().all(|n| {
        let a = fs::read(dir.join(format!("verify_a/{n}.json"))).unwrap_or_default();
        !a.is_empty() && a == fs::read(dir.join(format!("verify_b/{n}.json"))).unwrap_or_default()
    });
    if let Some(last) = out.last_mut() {
        last.1 &= same_reports;
    }
    out
}
