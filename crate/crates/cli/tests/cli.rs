use std::path::Path;
use std::process::{Command, Output};

fn socq(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_socq")).args(args).env("RUST_LOG", "warn").output().unwrap()
}

fn ok(args: &[&str]) -> String {
    let out = socq(args);
    assert!(out.status.success(), "socq {args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn synthetic_pipeline_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    let ckpt = dir.path().join("social_token");
    let evals = dir.path().join("eval");

    let split = ok(&["model", "synth", "--posts", "30", "--seed", "3", "--out", p(&data)]);
    assert!(split.starts_with("train "), "{split}");
    for f in ["train.jsonl", "valid.jsonl", "test.jsonl"] {
        assert!(data.join(f).exists(), "{f} missing");
    }

    ok(&[
        "model", "train", "--variant", "social_token", "--category", "EXPERTISE",
        "--train", p(&data.join("train.jsonl")), "--valid", p(&data.join("valid.jsonl")),
        "--epochs", "1", "--seed", "5", "--out", p(&ckpt),
    ]);

    let gen = ok(&["model", "generate", "--checkpoint", p(&ckpt), "--post", "i have a loan and some savings", "--group", "Expert"]);
    let gen: serde_json::Value = serde_json::from_str(gen.trim()).unwrap();
    assert_eq!(gen["variant"], "social_token");
    assert!(gen["question"].is_string());
    assert!(!gen["model_version"].as_str().unwrap().is_empty());

    let bad = socq(&["model", "generate", "--checkpoint", p(&ckpt), "--post", "x", "--group", "Sideways"]);
    assert!(!bad.status.success());
    assert!(String::from_utf8_lossy(&bad.stderr).contains("error:"));

    let metrics = ok(&[
        "eval", "run", "--model", &format!("social={}", p(&ckpt)),
        "--test", p(&data.join("test.jsonl")), "--train", p(&data.join("train.jsonl")),
        "--subsets", "full,divisive@10", "--out", p(&evals),
    ]);
    assert!(metrics.lines().count() >= 3, "{metrics}");
    let rows: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(evals.join("metrics.json")).unwrap()).unwrap();
    let rows = rows.as_array().unwrap();
    assert_eq!(rows.len(), 2);
    for r in rows {
        assert_eq!(r["model"], "social");
        let d = r["diversity"].as_f64().unwrap();
        assert!((0.0..=1.0).contains(&d));
    }
}

#[test]
fn missing_checkpoint_is_an_error() {
    let out = socq(&["model", "generate", "--checkpoint", "/nonexistent/ckpt", "--post", "hello"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("/nonexistent/ckpt"));
}

#[test]
fn related_source_flags_conflict() {
    let out = socq(&[
        "profile", "thresholds", "--history", "h.jsonl", "--target", "t", "--related", "r.txt", "--allowlist", "a.tsv",
        "--subreddit-embeddings", "e.tsv", "--out", "x.json",
    ]);
    assert!(!out.status.success());
}
