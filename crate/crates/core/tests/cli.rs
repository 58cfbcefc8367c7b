mod common;

use std::fs;

use common::{determinism_runs, rbfm};

#[test]
fn every_subcommand_is_byte_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    for (name, identical, ok) in determinism_runs(dir.path()) {
        assert!(ok, "{name} exited with an error");
        assert!(identical, "{name} output differs between runs");
    }
    let csv = fs::read_to_string(dir.path().join("sweep_a.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("env,task,method,mode,magnitude,seed,return_exact,return_mc"));
    assert_eq!(lines.count(), 2 * 3 * 2 * 2);
}

#[test]
fn errors_exit_nonzero() {
    let dir = tempfile::tempdir().unwrap();
    let missing = rbfm(dir.path(), &["pretrain", "--config", "nope.json", "--out", "m.json"]);
    assert!(!missing.status.success());

    fs::write(dir.path().join("bad.json"), r#"{"env":{"family":"chain","n":1}}"#).unwrap();
    let bad = rbfm(dir.path(), &["pretrain", "--config", "bad.json", "--out", "m.json"]);
    assert!(!bad.status.success());
    assert!(String::from_utf8_lossy(&bad.stderr).contains("bad environment spec"));

    let unknown = rbfm(dir.path(), &["verify", "--suite", "everything", "--out", "r"]);
    assert!(!unknown.status.success());
}

#[test]
fn eval_rejects_out_of_range_perturbation() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    fs::write(
        p.join("c.json"),
        r#"{"env":{"family":"chain","n":5,"slip":0.5},"pretrain":{"d":2,"steps":10,"batch_size":8},"n_transitions":200}"#,
    )
    .unwrap();
    fs::write(p.join("e.json"), r#"{"env":{"family":"chain","n":5,"slip":0.5},"task":"left_end","horizon":5}"#).unwrap();
    fs::write(p.join("i.json"), r#"{"steps":2}"#).unwrap();
    assert!(rbfm(p, &["pretrain", "--config", "c.json", "--out", "m.json"]).status.success());
    assert!(rbfm(p, &["expert", "--config", "e.json", "--out", "x.json"]).status.success());
    assert!(rbfm(p, &["infer", "--model", "m.json", "--expert", "x.json", "--method", "fb_il", "--config", "i.json", "--out", "z.json"])
        .status
        .success());
    let ok = rbfm(p, &["eval", "--model", "m.json", "--z", "z.json", "--perturb", "slip_shift:0.4", "--task", "left_end"]);
    assert!(ok.status.success());
    let doc: serde_json::Value = serde_json::from_slice(&ok.stdout).unwrap();
    assert!(doc["return_exact"].as_f64().unwrap().is_finite());
    let bad = rbfm(p, &["eval", "--model", "m.json", "--z", "z.json", "--perturb", "slip_shift:0.5", "--task", "left_end"]);
    assert!(!bad.status.success());
}
