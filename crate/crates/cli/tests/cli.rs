use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn hftp(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hftp"))
        .args(args)
        .current_dir(dir)
        .env_remove("HFTP_SEED")
        .output()
        .unwrap()
}

fn ok(dir: &Path, args: &[&str]) {
    let out = hftp(dir, args);
    assert!(out.status.success(), "hftp {args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
}

fn json(path: impl AsRef<Path>) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn scenario(dir: &Path) {
    ok(dir, &["synth", "--default-scenario", "--out", "data"]);
}

#[test]
fn synth_spec_files_are_readable_and_reproducible() {
    let tmp = tempfile::tempdir().unwrap();
    let spec = r#"{
        "shape": {"kind": "activation", "n_layers": 2, "n_neurons": 3, "n_timepoints": 16, "rate_hz": 4.0},
        "planted": [{"select": "neurons", "layer": 1, "start": 0, "end": 2, "freq_hz": 1.0, "amplitude": 2.0}],
        "noise_sigma": 0.5,
        "seed": 4
    }"#;
    std::fs::write(tmp.path().join("toy.json"), spec).unwrap();
    ok(tmp.path(), &["synth", "--spec", "toy.json", "--out", "a"]);
    ok(tmp.path(), &["synth", "--spec", "toy.json", "--out", "b"]);
    let a = std::fs::read(tmp.path().join("a/toy.act")).unwrap();
    assert_eq!(a, std::fs::read(tmp.path().join("b/toy.act")).unwrap());
    let t = hftp::ingest::read_activation_file(tmp.path().join("a/toy.act")).unwrap();
    assert_eq!((t.n_layers(), t.n_neurons(), t.n_timepoints()), (2, 3, 16));
    let echoed = t.provenance.unwrap();
    assert_eq!(echoed["seed"], 4);
    assert_eq!(echoed["planted"][0]["freq_hz"], 1.0);
}

#[test]
fn malformed_input_exits_3() {
    let tmp = tempfile::tempdir().unwrap();
    std::fs::write(tmp.path().join("bad.act"), b"not an activation file").unwrap();
    let out = hftp(tmp.path(), &["probe-model", "--exp", "bad.act", "--ctrl", "bad.act", "--out", "o"]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("bad.act"));
}

#[test]
fn config_errors_exit_2() {
    let tmp = tempfile::tempdir().unwrap();
    std::fs::write(tmp.path().join("typo.json"), r#"{"n_perms": 500}"#).unwrap();
    let out = hftp(tmp.path(), &["probe-brain", "--config", "typo.json"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("n_perms"));

    let out = hftp(tmp.path(), &["probe-brain", "--recording", "x.tri", "--n-perm", "50"]);
    assert_eq!(out.status.code(), Some(2));

    let out = hftp(tmp.path(), &["probe-brain"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn degenerate_features_exit_4() {
    let tmp = tempfile::tempdir().unwrap();
    // a silent model has an all-zero spectrum in every condition
    std::fs::write(tmp.path().join("silent.json"), r#"{"model_noise": 0.0, "model_amplitude": 0.0}"#).unwrap();
    std::fs::write(tmp.path().join("run.json"), r#"{"inputs": {"scenario": "silent.json"}, "out_dir": "data"}"#).unwrap();
    ok(tmp.path(), &["synth", "--config", "run.json"]);
    let out = hftp(tmp.path(), &["align", "--config", "data/run.json"]);
    assert_eq!(out.status.code(), Some(4), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn seed_precedence_is_config_then_env_then_flag() {
    let tmp = tempfile::tempdir().unwrap();
    scenario(tmp.path());
    let seed_of = |extra: &[&str], env: Option<&str>| {
        let mut cmd = Command::new(env!("CARGO_BIN_EXE_hftp"));
        cmd.current_dir(tmp.path()).env_remove("HFTP_SEED");
        if let Some(s) = env {
            cmd.env("HFTP_SEED", s);
        }
        let mut args = vec!["probe-model", "--config", "data/run.json", "--n-perm", "100", "--out", "s"];
        args.extend_from_slice(extra);
        let out = cmd.args(&args).output().unwrap();
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        json(tmp.path().join("s/probe_model.json"))["config"]["permutation"]["seed"].as_u64().unwrap()
    };
    assert_eq!(seed_of(&[], None), 0);
    assert_eq!(seed_of(&[], Some("21")), 21);
    assert_eq!(seed_of(&["--seed", "5"], Some("21")), 5);
}

#[test]
fn stages_chain_and_report_merges() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    scenario(dir);
    for stage in ["probe-model", "probe-brain"] {
        ok(dir, &[stage, "--config", "data/run.json", "--n-perm", "200"]);
    }
    ok(
        dir,
        &[
            "align", "--config", "data/run.json",
            "--neuron-classes", "data/results/neuron_classes.json",
            "--channel-classes", "data/results/channel_classes.json",
        ],
    );
    let res = dir.join("data/results");

    // hemisphere-regions without channels print the sentinel
    let table = std::fs::read_to_string(res.join("alignment_table.csv")).unwrap();
    assert!(table.lines().next().unwrap() == "pool,region,L,R");
    assert!(table.lines().any(|l| l.starts_with("combined,STG,/,/")), "{table}");

    // the overlap tests used the channel classification
    let overlap = std::fs::read_to_string(res.join("alignment_overlap.csv")).unwrap();
    assert!(overlap.lines().count() > 1);

    ok(dir, &["report", "--stage", "data/results", "--out", "rep", "--svg"]);
    let report = json(dir.join("rep/report.json"));
    for (stage, file) in [("probe_model", "probe_model.json"), ("probe_brain", "probe_brain.json"), ("alignment", "alignment.json")] {
        assert_eq!(report[stage][0]["data"], json(res.join(file)), "{stage} changed in the merge");
    }
    assert_eq!(report["gaps"], serde_json::json!(["encoding"]));
    assert!(report["encoding"].is_null());
    let svgs: Vec<_> = std::fs::read_dir(dir.join("rep"))
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|e| e == "svg"))
        .collect();
    assert!(svgs.len() >= 4, "{svgs:?}");
    for p in svgs {
        let text = std::fs::read_to_string(&p).unwrap();
        let doc = roxmltree::Document::parse(&text).unwrap_or_else(|e| panic!("{}: {e}", p.display()));
        assert_eq!(doc.root_element().tag_name().name(), "svg");
    }
}

#[test]
fn report_over_two_sources_compares_models_and_lists_gaps() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    scenario(dir);
    ok(dir, &["align", "--config", "data/run.json", "--out", "m1"]);
    ok(dir, &["align", "--config", "data/run.json", "--out", "m2", "--k", "3"]);
    ok(dir, &["report", "--stage", "m1", "--stage", "m2", "--out", "rep"]);
    let report = json(dir.join("rep/report.json"));
    assert_eq!(report["alignment"].as_array().unwrap().len(), 2);
    assert_eq!(report["sources"], serde_json::json!(["m1", "m2"]));
    assert_eq!(report["gaps"], serde_json::json!(["probe_model", "probe_brain", "encoding"]));
    let cmp = &report["model_comparison"];
    assert_eq!(cmp["models"].as_array().unwrap().len(), 2);
    assert!(cmp["anova"]["f"].is_number() || cmp["error"].is_string());
}

#[test]
fn report_without_stages_is_a_config_error() {
    let tmp = tempfile::tempdir().unwrap();
    let out = hftp(tmp.path(), &["report", "--out", "rep"]);
    assert_eq!(out.status.code(), Some(2));
}
