mod common;

use std::path::Path;
use std::process::{Command, Output};

use lemmaforge::corpus::write_tsv;

use common::{ambiguity_corpus, fixture};

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lemmaforge")).args(args).output().unwrap()
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn write_corpus(dir: &Path, name: &str, sentences: usize, seed: u64) -> String {
    let path = dir.join(name);
    write_tsv(std::fs::File::create(&path).unwrap(), &ambiguity_corpus(sentences, seed)).unwrap();
    path.display().to_string()
}

const SMALL: [&str; 14] = [
    "--set", "hidden=8", "--set", "char_dim=6", "--set", "sent_hidden=6", "--set", "word_dim=4", "--set",
    "max_epochs=2", "--set", "beam_size=2", "--set", "enc_layers=1",
];

#[test]
fn no_arguments_is_a_usage_error() {
    assert_eq!(run(&[]).status.code(), Some(2));
}

#[test]
fn missing_input_file_exits_2() {
    let out = run(&["diagnose", "--train", "/nonexistent/corpus.tsv"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("/nonexistent/corpus.tsv"));
}

#[test]
fn bad_override_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let train = write_corpus(dir.path(), "t.tsv", 30, 1);
    let out_dir = dir.path().join("out");
    let out = run(&[
        "train",
        "--set",
        &format!("train={train}"),
        "--set",
        "no_such_field=1",
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn diagnose_prints_json() {
    let out = run(&["diagnose", "--train", fixture("dutch.tsv").to_str().unwrap()]);
    assert!(out.status.success());
    let v: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert!(v["unique_tree_count"].as_u64().unwrap() > 0);
    assert_eq!(v["window_truncated"], true);
}

#[test]
fn induce_trees_writes_inventory() {
    let dir = tempfile::tempdir().unwrap();
    let out_file = dir.path().join("trees.txt");
    let out = run(&[
        "induce-trees",
        "--train",
        fixture("latin.conllu").to_str().unwrap(),
        "--out",
        out_file.to_str().unwrap(),
    ]);
    assert!(out.status.success());
    assert!(!std::fs::read_to_string(out_file).unwrap().trim().is_empty());
}

#[test]
fn train_eval_probe_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let train = write_corpus(dir.path(), "train.tsv", 60, 2);
    let model_dir = dir.path().join("run");
    let mut args = vec!["train", "--variant", "sent-lm", "--seed", "3"];
    let train_set = format!("train={train}");
    args.extend(["--set", &train_set]);
    args.extend(SMALL);
    args.extend(["--out", model_dir.to_str().unwrap()]);
    let out = run(&args);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    for file in ["epoch_log.json", "report.json", "predictions.csv", "model"] {
        assert!(model_dir.join(file).exists(), "{file}");
    }
    let log: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(model_dir.join("epoch_log.json")).unwrap()).unwrap();
    assert_eq!(log.as_array().unwrap().len(), 2);

    let eval_dir = dir.path().join("eval");
    let model_path = model_dir.join("model");
    let mut args = vec!["eval", "--model", model_path.to_str().unwrap(), "--seed", "3", "--beam-size", "1"];
    args.extend(["--set", &train_set, "--out", eval_dir.to_str().unwrap()]);
    let out = run(&args);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(eval_dir.join("report.json").exists());

    // The synthetic corpus carries no tags, so every probe task is skipped.
    let mut args = vec!["probe", "--model", model_path.to_str().unwrap(), "--seed", "3"];
    args.extend(["--set", &train_set]);
    let out = run(&args);
    assert!(out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("skipped"));
}

#[test]
fn compare_writes_report() {
    let dir = tempfile::tempdir().unwrap();
    let train = write_corpus(dir.path(), "train.tsv", 40, 4);
    let report = dir.path().join("cmp.json");
    let train_set = format!("train={train}");
    let mut args = vec!["compare", "--variants", "plain,edittree", "--seeds", "0", "--set", &train_set];
    args.extend(SMALL);
    args.extend(["--set", "tree_epochs=2", "--out", report.to_str().unwrap()]);
    let out = run(&args);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(report).unwrap()).unwrap();
    assert_eq!(v["cells"].as_array().unwrap().len(), 2);
}
