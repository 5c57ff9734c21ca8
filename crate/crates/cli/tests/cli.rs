use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use micl::data::{generate_synthetic, save_dataset, Split, SynthConfig};
use serde_json::Value;

fn micl(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_micl"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn p(path: &Path) -> &str {
    path.to_str().expect("utf-8 path")
}

fn read_json(path: PathBuf) -> Value {
    serde_json::from_str(&fs::read_to_string(&path).expect("file exists")).expect("valid json")
}

fn line_count(path: PathBuf) -> usize {
    fs::read_to_string(path).expect("file exists").lines().count()
}

fn train_file(dir: &Path, size: usize, patch_dim: usize) -> PathBuf {
    let mut ds = generate_synthetic(
        &SynthConfig {
            size,
            patch_dim,
            ..SynthConfig::default()
        },
        11,
    )
    .unwrap();
    ds.split = Split::Train;
    let path = dir.join(format!("train_{size}_{patch_dim}.jsonl"));
    save_dataset(&ds, &path).unwrap();
    path
}

#[test]
fn synth_partitions_and_is_reproducible() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    for out in [&a, &b] {
        let o = micl(&["synth", "--size", "300", "--seed", "7", "--out", p(out)]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    for (name, n) in [("train.jsonl", 180), ("val.jsonl", 60), ("test.jsonl", 60)] {
        assert_eq!(line_count(a.join(name)), n);
        assert_eq!(fs::read(a.join(name)).unwrap(), fs::read(b.join(name)).unwrap());
    }
    let manifest = read_json(a.join("manifest.json"));
    assert_eq!(manifest["seed"], 7);
    assert_eq!(manifest["artifacts"].as_array().unwrap().len(), 3);
}

#[test]
fn synth_rejects_single_sample() {
    let tmp = tempfile::tempdir().unwrap();
    let o = micl(&["synth", "--size", "1", "--out", p(tmp.path())]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn augment_follows_strategy_ratios() {
    let tmp = tempfile::tempdir().unwrap();
    let input = train_file(tmp.path(), 10, 16);
    let out = tmp.path().join("aug");
    let o = micl(&["augment", "--dataset", p(&input), "--out", p(&out)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let summary = read_json(out.join("augmentation_summary.json"));
    for (name, n) in [("flip", 5), ("paraphrase", 5), ("crop", 3), ("swap", 3), ("style", 2), ("regen", 2)] {
        assert_eq!(summary["assigned"][name], n, "{name}");
    }
    assert_eq!(line_count(out.join("train.jsonl")), 30);
}

#[test]
fn augment_without_image_strategies() {
    let tmp = tempfile::tempdir().unwrap();
    let input = train_file(tmp.path(), 10, 16);
    let out = tmp.path().join("aug");
    let o = micl(&["augment", "--dataset", p(&input), "--out", p(&out), "--no-image-aug"]);
    assert!(o.status.success());
    let summary = read_json(out.join("augmentation_summary.json"));
    let keys: Vec<&String> = summary["produced"].as_object().unwrap().keys().collect();
    assert_eq!(keys, ["flip", "paraphrase"]);
    assert_eq!(line_count(out.join("train.jsonl")), 20);
}

#[test]
fn augment_missing_input_fails() {
    let tmp = tempfile::tempdir().unwrap();
    let o = micl(&[
        "augment",
        "--dataset",
        p(&tmp.path().join("absent.jsonl")),
        "--out",
        p(&tmp.path().join("o")),
    ]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn train_rejects_zero_epochs() {
    let tmp = tempfile::tempdir().unwrap();
    let input = train_file(tmp.path(), 12, 16);
    let o = micl(&["train", "--dataset", p(&input), "--out", p(&tmp.path().join("t")), "--epochs", "0"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn train_records_defaults_and_zero_lambda() {
    let tmp = tempfile::tempdir().unwrap();
    let input = train_file(tmp.path(), 12, 16);

    let out = tmp.path().join("default");
    let o = micl(&["train", "--dataset", p(&input), "--out", p(&out), "--dim", "8", "--epochs", "1"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let config = &read_json(out.join("manifest.json"))["invocation"]["config"];
    assert_eq!(config["tau"], 0.07);
    assert_eq!(config["lambda"], 1.0);
    assert_eq!(config["model"]["edge_threshold"], 0.6);

    let out = tmp.path().join("no_cl");
    let o = micl(&[
        "train", "--dataset", p(&input), "--out", p(&out), "--dim", "8", "--epochs", "2", "--lambda", "0",
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(read_json(out.join("manifest.json"))["invocation"]["config"]["lambda"], 0.0);
    let log = fs::read_to_string(out.join("train_log.jsonl")).unwrap();
    for line in log.lines() {
        let row: Value = serde_json::from_str(line).unwrap();
        assert_eq!(row["lambda"], 0.0);
        assert_eq!(row["l_total"], row["l_ce"]);
    }
}

#[test]
fn config_file_is_overridden_by_flags() {
    let tmp = tempfile::tempdir().unwrap();
    let input = train_file(tmp.path(), 12, 16);
    let config = tmp.path().join("config.json");
    fs::write(&config, r#"{"tau": 0.5, "epochs": 1, "model": {"dim": 8}}"#).unwrap();
    let out = tmp.path().join("t");
    let o = micl(&["train", "--dataset", p(&input), "--out", p(&out), "--config", p(&config), "--tau", "0.2"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let recorded = &read_json(out.join("manifest.json"))["invocation"]["config"];
    assert_eq!(recorded["tau"], 0.2);
    assert_eq!(recorded["epochs"], 1);
    assert_eq!(recorded["model"]["dim"], 8);
    assert_eq!(recorded["lambda"], 1.0);
}

#[test]
fn eval_reports_credibility_and_rejects_mismatch() {
    let tmp = tempfile::tempdir().unwrap();
    let input = train_file(tmp.path(), 12, 16);
    let run = tmp.path().join("t");
    let o = micl(&["train", "--dataset", p(&input), "--out", p(&run), "--dim", "8", "--epochs", "1"]);
    assert!(o.status.success());
    let checkpoint = run.join("checkpoint.json");

    let out = tmp.path().join("e");
    let o = micl(&["eval", "--checkpoint", p(&checkpoint), "--dataset", p(&input), "--out", p(&out), "--credibility"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let metrics = read_json(out.join("metrics.json"));
    assert!(metrics["accuracy"].is_number());
    let report = read_json(out.join("credibility.json"));
    for group in ["sarcastic", "non_sarcastic", "all"] {
        for view in ["token_patch", "entity_object", "sentiment"] {
            assert!(report[group][view].is_number(), "{group}.{view}");
        }
    }

    let narrow = train_file(tmp.path(), 4, 8);
    let o = micl(&["eval", "--checkpoint", p(&checkpoint), "--dataset", p(&narrow), "--out", p(&out)]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn gradcheck_outcomes() {
    let tmp = tempfile::tempdir().unwrap();
    let o = micl(&["gradcheck", "--out", p(&tmp.path().join("ok"))]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let report = read_json(tmp.path().join("ok/gradcheck.json"));
    for g in report["groups"].as_array().unwrap() {
        assert!(g["max_rel_error"].as_f64().unwrap() < 1e-4, "{g}");
    }

    let o = micl(&[
        "gradcheck", "--dim", "4", "--batch", "2", "--tolerance", "0", "--out", p(&tmp.path().join("bad")),
    ]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("classifier.w"));

    let o = micl(&["gradcheck", "--eps", "0", "--out", p(&tmp.path().join("eps"))]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn replay_detects_changed_inputs() {
    let tmp = tempfile::tempdir().unwrap();
    let input = train_file(tmp.path(), 10, 16);
    let out = tmp.path().join("aug");
    assert!(micl(&["augment", "--dataset", p(&input), "--out", p(&out)]).status.success());

    let manifest = out.join("manifest.json");
    let o = micl(&["replay", "--manifest", p(&manifest), "--out", p(&tmp.path().join("r"))]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));

    fs::write(&input, fs::read_to_string(&input).unwrap() + "\n").unwrap();
    let o = micl(&["replay", "--manifest", p(&manifest), "--out", p(&tmp.path().join("r2"))]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("inputs changed"));
}

#[test]
fn unknown_flags_are_usage_errors() {
    assert_eq!(micl(&["train", "--bogus"]).status.code(), Some(1));
    assert_eq!(micl(&[]).status.code(), Some(1));
}
