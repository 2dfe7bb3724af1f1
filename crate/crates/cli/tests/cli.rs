use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn evident(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_evident"))
        .args(args)
        .current_dir(dir)
        .env("EVIDENT_HOME", dir.join("home"))
        .env_remove("RUST_LOG")
        .output()
        .unwrap()
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = evident(dir, args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

/// Asserts a nonzero exit with a single `error[<tag>]:` line and returns it.
fn fails(dir: &Path, args: &[&str], tag: &str) -> String {
    let out = evident(dir, args);
    assert!(!out.status.success(), "{args:?} unexpectedly succeeded");
    let stderr = String::from_utf8(out.stderr).unwrap();
    let lines: Vec<&str> = stderr.lines().collect();
    assert_eq!(lines.len(), 1, "{stderr}");
    assert!(lines[0].starts_with(&format!("error[{tag}]: ")), "{stderr}");
    lines[0].to_string()
}

fn small_corpus() -> (TempDir, PathBuf) {
    let dir = tempfile::tempdir().unwrap();
    ok(
        dir.path(),
        &[
            "synth-data",
            "--out",
            "data.jsonl",
            "--n-docs",
            "60",
            "--spurious-rate",
            "0.9",
            "--evidence-fraction",
            "0.5",
        ],
    );
    let data = dir.path().join("data.jsonl");
    (dir, data)
}

fn train_one(dir: &Path, regs: &str, epochs: &str) {
    ok(
        dir,
        &[
            "train",
            "--data",
            "data.jsonl",
            "--out",
            "runs",
            "--regularizers",
            regs,
            "--epochs",
            epochs,
            "--learning-rate",
            "1e-3",
        ],
    );
}

#[test]
fn synth_data_prints_stats_and_fingerprint() {
    let (dir, data) = small_corpus();
    let lines = std::fs::read_to_string(&data).unwrap().lines().count();
    assert_eq!(lines, 60);
    assert!(dir.path().join("data.jsonl.fingerprint.json").exists());
    let again = ok(
        dir.path(),
        &[
            "synth-data",
            "--out",
            "again.jsonl",
            "--n-docs",
            "60",
            "--spurious-rate",
            "0.9",
            "--evidence-fraction",
            "0.5",
        ],
    );
    assert!(again.contains("NA%"));
    assert_eq!(
        std::fs::read(&data).unwrap(),
        std::fs::read(dir.path().join("again.jsonl")).unwrap()
    );
}

#[test]
fn synth_config_errors_name_the_field() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("bad.toml"), "n_labels = 3\nn_doc = 10\n").unwrap();
    let line = fails(
        dir.path(),
        &["synth-data", "--config", "bad.toml", "--out", "x.jsonl"],
        "config",
    );
    assert!(line.contains("n_doc"), "{line}");
    std::fs::write(
        dir.path().join("range.toml"),
        "n_labels = 3\nn_docs = 10\nsentences_per_doc = [4, 8]\nspurious_correlation_rate = 1.5\nseed = 1\n",
    )
    .unwrap();
    let line = fails(
        dir.path(),
        &["synth-data", "--config", "range.toml", "--out", "x.jsonl"],
        "config",
    );
    assert!(line.contains("spurious_correlation_rate"), "{line}");
}

#[test]
fn toml_config_and_flag_override() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(
        dir.path().join("c.toml"),
        "n_labels = 4\nn_docs = 30\nsentences_per_doc = [3, 5]\nspurious_correlation_rate = 0.0\nseed = 3\n",
    )
    .unwrap();
    ok(
        dir.path(),
        &["synth-data", "--config", "c.toml", "--n-docs", "20", "--out", "c.jsonl"],
    );
    let text = std::fs::read_to_string(dir.path().join("c.jsonl")).unwrap();
    assert_eq!(text.lines().count(), 20);
    let fp: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("c.jsonl.fingerprint.json")).unwrap()).unwrap();
    assert_eq!(fp["config"]["synthetic"]["n_labels"], 4);
    assert_eq!(fp["config"]["synthetic"]["n_docs"], 20);
}

#[test]
fn adapt_docred_writes_labels_and_stats() {
    let dir = tempfile::tempdir().unwrap();
    let fixture = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../core/tests/fixtures/docred_two_docs.json");
    let stdout = ok(
        dir.path(),
        &[
            "adapt-docred",
            "--input",
            fixture.to_str().unwrap(),
            "--out",
            "docred.jsonl",
            "--na-fraction",
            "0.5",
            "--seed",
            "7",
        ],
    );
    assert!(stdout.contains("50.0"), "{stdout}");
    let golden = std::fs::read_to_string(
        PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../core/tests/fixtures/docred_two_docs.na50_seed7.jsonl"),
    )
    .unwrap();
    assert_eq!(
        std::fs::read_to_string(dir.path().join("docred.jsonl")).unwrap(),
        golden
    );
    let labels: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("docred.labels.json")).unwrap()).unwrap();
    assert_eq!(labels["names"][0], "NA");
    assert!(dir.path().join("docred.jsonl.fingerprint.json").exists());
    fails(
        dir.path(),
        &[
            "adapt-docred",
            "--input",
            fixture.to_str().unwrap(),
            "--out",
            "x.jsonl",
            "--evidence-fraction",
            "2",
        ],
        "config",
    );
}

#[test]
fn four_variants_get_distinct_directories_with_history() {
    let (dir, _) = small_corpus();
    for regs in ["none", "attn", "entropy", "both"] {
        train_one(dir.path(), regs, "2");
    }
    for regs in ["none", "attn", "entropy", "both"] {
        let run = dir.path().join("runs").join(regs);
        for f in [
            "model.json",
            "history.json",
            "state.json",
            "config.json",
            "fingerprint.json",
        ] {
            assert!(run.join(f).exists(), "{regs}/{f}");
        }
        let history: Vec<serde_json::Value> =
            serde_json::from_str(&std::fs::read_to_string(run.join("history.json")).unwrap()).unwrap();
        assert_eq!(history.len(), 2);
        for (i, h) in history.iter().enumerate() {
            assert_eq!(h["epoch"], i);
        }
        assert_eq!(
            history[0]["attention_loss"].is_null(),
            !(regs == "attn" || regs == "both")
        );
        assert_eq!(
            history[0]["entropy_loss"].is_null(),
            !(regs == "entropy" || regs == "both")
        );
    }
    let fps: std::collections::BTreeSet<String> = ["none", "attn", "entropy", "both"]
        .iter()
        .map(|r| std::fs::read_to_string(dir.path().join("runs").join(r).join("fingerprint.json")).unwrap())
        .collect();
    assert_eq!(fps.len(), 4);
}

#[test]
fn resume_refuses_on_config_mismatch() {
    let (dir, _) = small_corpus();
    train_one(dir.path(), "none", "2");
    fails(
        dir.path(),
        &[
            "train",
            "--data",
            "data.jsonl",
            "--out",
            "runs",
            "--regularizers",
            "none",
            "--epochs",
            "2",
            "--learning-rate",
            "1e-3",
        ],
        "invalid-argument",
    );
    let line = fails(
        dir.path(),
        &[
            "train",
            "--data",
            "data.jsonl",
            "--out",
            "runs",
            "--regularizers",
            "none",
            "--epochs",
            "2",
            "--learning-rate",
            "5e-4",
            "--resume",
        ],
        "config",
    );
    assert!(line.contains("fingerprint"), "{line}");
    // Same config: the stored state already covers every epoch.
    ok(
        dir.path(),
        &[
            "train",
            "--data",
            "data.jsonl",
            "--out",
            "runs",
            "--regularizers",
            "none",
            "--epochs",
            "2",
            "--learning-rate",
            "1e-3",
            "--resume",
        ],
    );
}

#[test]
fn train_defaults_to_the_home_directory() {
    let (dir, _) = small_corpus();
    ok(
        dir.path(),
        &[
            "train",
            "--data",
            "data.jsonl",
            "--epochs",
            "1",
            "--learning-rate",
            "1e-3",
        ],
    );
    assert!(dir.path().join("home/data/none/model.json").exists());
    // explain resolves a relative checkpoint under the home directory
    ok(
        dir.path(),
        &[
            "explain",
            "--checkpoint",
            "data/none",
            "--data",
            "data.jsonl",
            "--out",
            "p.jsonl",
            "--limit",
            "3",
        ],
    );
}

#[test]
fn explain_sweep_evaluate_pipeline() {
    let (dir, _) = small_corpus();
    let d = dir.path();
    train_one(d, "both", "2");
    fails(
        d,
        &[
            "explain",
            "--checkpoint",
            "runs/both",
            "--data",
            "data.jsonl",
            "--method",
            "occlusion",
            "--out",
            "x.jsonl",
        ],
        "unsupported-method",
    );
    fails(
        d,
        &[
            "explain",
            "--checkpoint",
            "runs/both",
            "--data",
            "data.jsonl",
            "--selector",
            "random",
            "--out",
            "x.jsonl",
        ],
        "invalid-argument",
    );

    ok(
        d,
        &[
            "explain",
            "--checkpoint",
            "runs/both",
            "--data",
            "data.jsonl",
            "--sweep",
            "s1.csv",
        ],
    );
    ok(
        d,
        &[
            "explain",
            "--checkpoint",
            "runs/both",
            "--data",
            "data.jsonl",
            "--sweep",
            "s2.csv",
        ],
    );
    let s1 = std::fs::read_to_string(d.join("s1.csv")).unwrap();
    assert_eq!(s1, std::fs::read_to_string(d.join("s2.csv")).unwrap());
    assert_eq!(s1.lines().count(), 11);
    let lambdas: Vec<f64> = s1
        .lines()
        .skip(1)
        .map(|l| l.split(',').next().unwrap().parse().unwrap())
        .collect();
    assert_eq!(lambdas.first(), Some(&0.5));
    assert_eq!(lambdas.last(), Some(&0.95));

    ok(
        d,
        &[
            "explain",
            "--checkpoint",
            "runs/both",
            "--data",
            "data.jsonl",
            "--out",
            "suff.jsonl",
            "--highlight",
            "hl.jsonl",
        ],
    );
    ok(
        d,
        &[
            "explain",
            "--checkpoint",
            "runs/both",
            "--data",
            "data.jsonl",
            "--selector",
            "fulldoc",
            "--out",
            "full.jsonl",
        ],
    );
    assert!(d.join("suff.jsonl.fingerprint.json").exists());
    let hl = std::fs::read_to_string(d.join("hl.jsonl")).unwrap();
    let first: serde_json::Value = serde_json::from_str(hl.lines().next().unwrap()).unwrap();
    assert!(first["sentences"][0]["score"].is_number());

    ok(
        d,
        &[
            "evaluate",
            "--system",
            "suff=suff.jsonl",
            "--system",
            "full=full.jsonl",
            "--gold",
            "data.jsonl",
            "--out",
            "report.json",
        ],
    );
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(d.join("report.json")).unwrap()).unwrap();
    let reports = report["reports"].as_array().unwrap();
    assert_eq!(reports.len(), 2);
    assert_eq!(reports[0]["faithfulness_agreement"], 1.0);
    assert_eq!(reports[0]["reduced_label_accuracy"], reports[0]["label_accuracy"]);
    assert_eq!(reports[1]["evidence_recall"], 1.0);
    assert!(reports[0]["significance"]["suff>full:evidence_f1"]["p_value"].is_number());
    assert!(reports[1]["significance"]["full>suff:label_accuracy"]["p_value"].is_number());
    assert!(d.join("report.json.fingerprint.json").exists());

    // a prediction file covering other instances
    let preds = std::fs::read_to_string(d.join("suff.jsonl")).unwrap();
    let cut: String = preds.lines().skip(1).map(|l| format!("{l}\n")).collect();
    std::fs::write(d.join("short.jsonl"), cut).unwrap();
    fails(
        d,
        &[
            "evaluate",
            "--system",
            "short=short.jsonl",
            "--gold",
            "data.jsonl",
            "--out",
            "r2.json",
        ],
        "invalid-argument",
    );
}

#[test]
fn usage_errors_are_single_line() {
    let dir = tempfile::tempdir().unwrap();
    fails(dir.path(), &["bogus"], "usage");
    fails(dir.path(), &["train"], "usage");
    let out = evident(dir.path(), &["--help"]);
    assert!(out.status.success());
}

#[test]
fn missing_input_is_an_io_error() {
    let dir = tempfile::tempdir().unwrap();
    fails(dir.path(), &["train", "--data", "nope.jsonl"], "io");
}
