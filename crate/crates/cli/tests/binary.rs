use std::path::PathBuf;
use std::process::{Command, Output};

use serde_json::Value;

use mesc_core::cues::{compose_turn_context, EmotionCue};
use mesc_core::reasoning::{History, HistoryEntry};

fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures").join(name)
}

fn mesc(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mesc"))
        .args(args)
        .env_remove("MESC_CUE_URL")
        .output()
        .unwrap()
}

fn stdout(o: &Output) -> String {
    assert!(o.status.success(), "stderr: {}", String::from_utf8_lossy(&o.stderr));
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn train_micro(dir: &std::path::Path) -> PathBuf {
    let corpus = fixture("mini_train.jsonl");
    let out = mesc(&["train", corpus.to_str().unwrap(), "--model", "micro", "--epochs", "2", "--out", dir.to_str().unwrap()]);
    stdout(&out);
    dir.join("model.ckpt")
}

#[test]
fn validate_accepts_the_fixture() {
    let o = mesc(&["validate", fixture("mini_train.jsonl").to_str().unwrap()]);
    let v: Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["ok"], true);
    assert_eq!(v["dialogues"], 12);
}

#[test]
fn corpus_reports_match_the_manifests() {
    let corpus = fixture("mini_train.jsonl");
    for (cmd, manifest) in [("stats", "mini_train.stats.json"), ("phase", "mini_train.phase.json"), ("kappa", "mini_train.kappa.json")] {
        let o = mesc(&[cmd, "--corpus", corpus.to_str().unwrap()]);
        assert_eq!(stdout(&o), std::fs::read_to_string(fixture(manifest)).unwrap(), "{cmd}");
    }
}

#[test]
fn invalid_corpus_yields_an_error_record() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.jsonl");
    let good = std::fs::read_to_string(fixture("mini_train.jsonl")).unwrap();
    std::fs::write(&path, good.replacen("\"emotion\":\"", "\"emotion\":\"smug", 1)).unwrap();
    let o = mesc(&["validate", path.to_str().unwrap()]);
    assert!(!o.status.success());
    assert!(o.stdout.is_empty());
    let err: Value = serde_json::from_slice(&o.stderr).unwrap();
    assert_eq!(err["error"]["kind"], "corpus");
    assert_eq!(err["error"]["line"], 3);
}

#[test]
fn missing_file_is_an_io_error() {
    let o = mesc(&["stats", "/nonexistent/corpus.jsonl"]);
    assert!(!o.status.success());
    let err: Value = serde_json::from_slice(&o.stderr).unwrap();
    assert!(err["error"]["kind"].is_string());
}

#[test]
fn train_then_evaluate_writes_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let ckpt = train_micro(dir.path());
    let curve = std::fs::read_to_string(dir.path().join("loss_curve.csv")).unwrap();
    assert_eq!(curve.lines().count(), 3);
    let summary: Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("train_summary.json")).unwrap()).unwrap();
    assert_eq!(summary["n_examples"], 33);

    let eval_dir = dir.path().join("eval");
    let o = mesc(&[
        "evaluate",
        fixture("mini_train.jsonl").to_str().unwrap(),
        "--checkpoint",
        ckpt.to_str().unwrap(),
        "--max-response-len",
        "6",
        "--out",
        eval_dir.to_str().unwrap(),
    ]);
    let report: Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(report["n_turns"], 33);
    let preds = std::fs::read_to_string(eval_dir.join("predictions.jsonl")).unwrap();
    assert_eq!(preds.lines().count(), 33);
    assert_eq!(std::fs::read_to_string(eval_dir.join("report.json")).unwrap(), stdout(&o));
}

#[test]
fn generate_reads_histories() {
    let dir = tempfile::tempdir().unwrap();
    let ckpt = train_micro(dir.path());
    let histories = dir.path().join("h.jsonl");
    let context = compose_turn_context(EmotionCue::none(1), "I can't sleep.").unwrap();
    let entry = serde_json::to_string(&History::new(vec![HistoryEntry::Context { index: 1, context }]).unwrap()).unwrap();
    std::fs::write(&histories, format!("{entry}\n{entry}\n")).unwrap();
    let o = mesc(&["generate", "--checkpoint", ckpt.to_str().unwrap(), "--histories", histories.to_str().unwrap(), "--max-response-len", "4"]);
    let text = stdout(&o);
    let lines: Vec<Value> = text.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(lines.len(), 2);
    assert_eq!(lines[0], lines[1]);
    assert!(lines[0]["strategy"].is_string());
}

#[test]
fn ablate_reports_requested_rows() {
    let dir = tempfile::tempdir().unwrap();
    let o = mesc(&[
        "ablate",
        fixture("mini_train.jsonl").to_str().unwrap(),
        "--variants",
        "baseline,-emotion",
        "--model",
        "micro",
        "--epochs",
        "1",
        "--max-response-len",
        "4",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    let table = stdout(&o);
    assert!(table.contains("| baseline "));
    assert!(table.contains("| -emotion "));
    let reports: Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("ablation.json")).unwrap()).unwrap();
    assert_eq!(reports.as_array().unwrap().len(), 2);
    assert_eq!(std::fs::read_to_string(dir.path().join("ablation_table.txt")).unwrap(), table);
}

#[test]
fn chat_prints_stage_labels_per_turn() {
    use std::io::Write;
    let dir = tempfile::tempdir().unwrap();
    let ckpt = train_micro(dir.path());
    let mut child = Command::new(env!("CARGO_BIN_EXE_mesc"))
        .args(["chat", "--checkpoint", ckpt.to_str().unwrap(), "--max-response-len", "4"])
        .stdin(std::process::Stdio::piped())
        .stdout(std::process::Stdio::piped())
        .spawn()
        .unwrap();
    child.stdin.take().unwrap().write_all(b"I can't sleep.\nStill awake.\n/quit\n").unwrap();
    let out = child.wait_with_output().unwrap();
    let text = stdout(&out);
    assert_eq!(text.matches("user emotion:").count(), 2);
    assert_eq!(text.matches("mesc> ").count(), 2);
}

#[test]
fn bad_schema_setting_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let o = mesc(&[
        "train",
        fixture("mini_train.jsonl").to_str().unwrap(),
        "--schema",
        "include_smell=true",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert!(!o.status.success());
    let err: Value = serde_json::from_slice(&o.stderr).unwrap();
    assert_eq!(err["error"]["kind"], "schema");
}
