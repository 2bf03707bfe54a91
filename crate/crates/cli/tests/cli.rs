use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

fn ledgerscope(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ledgerscope"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("spawning ledgerscope")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("killed by a signal")
}

/// Small corpus split into `splits/`.
fn small_splits(dir: &Path) {
    fs::write(dir.join("synth.json"), r#"{"n_posts": 300, "seed": 4}"#).unwrap();
    assert_eq!(code(&ledgerscope(dir, &["synth", "--config", "synth.json", "--out", "data/corpus.jsonl"])), 0);
    let split = ["split", "--in", "data/corpus.jsonl", "--test", "60", "--val", "0.2", "--out-dir", "splits", "--stratify"];
    assert_eq!(code(&ledgerscope(dir, &split)), 0);
}

#[test]
fn pipeline_produces_reports() {
    let tmp = TempDir::new().unwrap();
    let dir = tmp.path();
    small_splits(dir);
    assert!(dir.join("data/images").read_dir().unwrap().next().is_some());

    let ingest = ["ingest", "--in", "data/corpus.jsonl", "--clean", "--report", "clean.json", "--out", "clean.jsonl"];
    assert_eq!(code(&ledgerscope(dir, &ingest)), 0);
    let clean: serde_json::Value = serde_json::from_slice(&fs::read(dir.join("clean.json")).unwrap()).unwrap();
    assert_eq!(clean["kept"], 300);

    let train = ["train", "--splits", "splits", "--epochs", "5", "--out", "model.bin", "--report", "train.json"];
    assert_eq!(code(&ledgerscope(dir, &train)), 0);
    assert!(dir.join("model.json").exists());

    let eval = ["eval", "--model", "model.bin", "--test", "splits/test.jsonl", "--report", "eval.json", "--roc", "roc.csv"];
    assert_eq!(code(&ledgerscope(dir, &eval)), 0);
    let report: serde_json::Value = serde_json::from_slice(&fs::read(dir.join("eval.json")).unwrap()).unwrap();
    assert_eq!(report["tp"].as_u64().unwrap() + report["fn"].as_u64().unwrap() + report["tn"].as_u64().unwrap() + report["fp"].as_u64().unwrap(), 60);
    assert!(fs::read_to_string(dir.join("roc.csv")).unwrap().lines().count() > 2);

    let rank = ["rank", "--model", "model.bin", "--in", "splits/test.jsonl", "--out", "queue.jsonl"];
    assert_eq!(code(&ledgerscope(dir, &rank)), 0);
    let queue = fs::read_to_string(dir.join("queue.jsonl")).unwrap();
    let scores: Vec<f64> = queue
        .lines()
        .map(|l| serde_json::from_str::<serde_json::Value>(l).unwrap()["score"].as_f64().unwrap())
        .collect();
    assert_eq!(scores.len(), 60);
    assert!(scores.windows(2).all(|w| w[0] >= w[1]));
}

#[test]
fn sidecar_features_match_baseline() {
    let tmp = TempDir::new().unwrap();
    let dir = tmp.path();
    small_splits(dir);
    for f in ["train", "validation"] {
        let args = ["featurize", "--in", &format!("splits/{f}.jsonl"), "--out-dir", &format!("feat-{f}")];
        assert_eq!(code(&ledgerscope(dir, &args)), 0);
    }
    // one sidecar set covering both files
    for name in ["hashtag_embeddings.tsv", "comment_embeddings.tsv", "image_embeddings.tsv"] {
        let a = fs::read_to_string(dir.join("feat-train").join(name)).unwrap();
        let b = fs::read_to_string(dir.join("feat-validation").join(name)).unwrap();
        let rows: String = b.lines().skip(1).map(|l| format!("{l}\n")).collect();
        fs::create_dir_all(dir.join("feat")).unwrap();
        fs::write(dir.join("feat").join(name), a + &rows).unwrap();
    }
    let base = ["train", "--splits", "splits", "--epochs", "3", "--out", "a.bin"];
    let side = ["train", "--splits", "splits", "--epochs", "3", "--out", "b.bin", "--features", "sidecar", "--sidecar-dir", "feat"];
    assert_eq!(code(&ledgerscope(dir, &base)), 0);
    assert_eq!(code(&ledgerscope(dir, &side)), 0);
    assert_eq!(fs::read(dir.join("a.bin")).unwrap(), fs::read(dir.join("b.bin")).unwrap());
}

#[test]
fn exit_codes() {
    let tmp = TempDir::new().unwrap();
    let dir = tmp.path();
    assert_eq!(code(&ledgerscope(dir, &["--help"])), 0);
    assert_eq!(code(&ledgerscope(dir, &["--version"])), 0);
    assert_eq!(code(&ledgerscope(dir, &["frobnicate"])), 1);
    assert_eq!(code(&ledgerscope(dir, &["train", "--splits", "x"])), 1, "missing --out");

    let missing = ledgerscope(dir, &["train", "--splits", "nowhere", "--out", "m.bin"]);
    assert_eq!(code(&missing), 2);
    assert!(String::from_utf8_lossy(&missing.stderr).contains("train split is empty"));

    fs::write(dir.join("bad.json"), r#"{"n_posts": 10, "colour": 3}"#).unwrap();
    assert_eq!(code(&ledgerscope(dir, &["synth", "--config", "bad.json", "--out", "c.jsonl"])), 1);
    fs::write(dir.join("zero.json"), r#"{"n_posts": 0}"#).unwrap();
    assert_eq!(code(&ledgerscope(dir, &["synth", "--config", "zero.json", "--out", "c.jsonl"])), 1);
    let dropout = ["train", "--splits", "nowhere", "--out", "m.bin", "--dropout", "1.5"];
    assert_eq!(code(&ledgerscope(dir, &dropout)), 1);

    fs::write(dir.join("broken.jsonl"), "{not json}\n").unwrap();
    let split = ["split", "--in", "broken.jsonl", "--out-dir", "s"];
    assert_eq!(code(&ledgerscope(dir, &split)), 1);
    let gone = ["split", "--in", "absent.jsonl", "--out-dir", "s"];
    assert_eq!(code(&ledgerscope(dir, &gone)), 2);
}

#[test]
fn seed_flag_overrides_config() {
    let tmp = TempDir::new().unwrap();
    let dir = tmp.path();
    fs::write(dir.join("synth.json"), r#"{"n_posts": 50, "seed": 1}"#).unwrap();
    for (out, seed) in [("a/c.jsonl", "2"), ("b/c.jsonl", "2"), ("c/c.jsonl", "3")] {
        assert_eq!(code(&ledgerscope(dir, &["synth", "--config", "synth.json", "--out", out, "--seed", seed])), 0);
    }
    let read = |p: &str| fs::read(dir.join(p)).unwrap();
    assert_eq!(read("a/c.jsonl"), read("b/c.jsonl"));
    assert_ne!(read("a/c.jsonl"), read("c/c.jsonl"));
}
