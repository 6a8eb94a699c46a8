use std::path::Path;
use std::process::{Command, Output};

fn aircast(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_aircast")).args(args).output().expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = aircast(args);
    assert!(out.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn p(dir: &Path, name: &str) -> String {
    dir.join(name).to_str().unwrap().to_string()
}

fn lines(path: &str) -> usize {
    std::fs::read_to_string(path).unwrap().lines().count()
}

#[test]
fn seed_7_classification_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path().to_str().unwrap();
    ok(&["synth", "--seed", "7", "--taxis", "5", "--hours", "24", "--out", d]);
    assert_eq!(lines(&p(dir.path(), "records.csv")), 1 + 5 * 24 * 60);
    assert_eq!(lines(&p(dir.path(), "stations.csv")), 1 + 24 * 13);

    let report = ok(&["ingest", "--input", &p(dir.path(), "records.csv"), "--out", d]);
    assert!(report.contains("read 7200 accepted 7200 rejected 0"), "{report}");
    ok(&["gridify", "--input", &p(dir.path(), "clean.csv"), "--out", d]);
    assert_eq!(lines(&p(dir.path(), "series.csv")), 1 + 24);
    ok(&[
        "train-cnn",
        "--frames",
        &p(dir.path(), "frames.csv"),
        "--stations",
        &p(dir.path(), "stations.csv"),
        "--epochs",
        "2",
        "--conv1",
        "4",
        "--conv2",
        "8",
        "--fc",
        "16",
        "--seed",
        "7",
        "--out",
        d,
    ]);
    assert_eq!(lines(&p(dir.path(), "cnn_history.csv")), 3);
    ok(&["predict", "--model", &p(dir.path(), "cnn.ckpt"), "--frames", &p(dir.path(), "frames.csv"), "--out", d]);
    let predictions = std::fs::read_to_string(p(dir.path(), "predictions.csv")).unwrap();
    assert_eq!(predictions.lines().count(), 1 + 24);
    assert!(predictions.lines().skip(1).all(|l| ["good", "moderate", "unhealthy", "hazardous"]
        .contains(&l.split(',').nth(1).unwrap())));
}

#[test]
fn rerunning_a_stage_rewrites_identical_bytes() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path().to_str().unwrap();
    ok(&["synth", "--seed", "3", "--taxis", "3", "--hours", "6", "--out", d]);
    ok(&["gridify", "--input", &p(dir.path(), "records.csv"), "--out", d]);
    let first = std::fs::read(p(dir.path(), "frames.csv")).unwrap();
    ok(&["gridify", "--input", &p(dir.path(), "records.csv"), "--out", d]);
    assert_eq!(std::fs::read(p(dir.path(), "frames.csv")).unwrap(), first);
}

#[test]
fn ingest_tallies_bad_rows() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path().to_str().unwrap();
    ok(&["synth", "--seed", "1", "--taxis", "1", "--hours", "1", "--out", d]);
    let path = p(dir.path(), "records.csv");
    let mut text = std::fs::read_to_string(&path).unwrap();
    let first_row = text.lines().nth(1).unwrap().to_string();
    let mut fields: Vec<&str> = first_row.split(',').collect();
    fields[9] = "150";
    text.push_str(&(fields.join(",") + "\n"));
    text.push_str("garbage\n");
    std::fs::write(&path, text).unwrap();
    let report = ok(&["ingest", "--input", &path, "--out", d]);
    assert!(report.contains("read 62 accepted 60 rejected 2 (schema 1, range 1, bounds 0)"), "{report}");
    let stored = std::fs::read_to_string(p(dir.path(), "ingest_report.csv")).unwrap();
    assert!(stored.contains("out_of_range,1"));
}

#[test]
fn forecasting_commands_and_eval() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path().to_str().unwrap();
    ok(&["synth", "--seed", "5", "--taxis", "2", "--hours", "40", "--out", d]);
    ok(&["gridify", "--input", &p(dir.path(), "records.csv"), "--out", d]);
    let series = p(dir.path(), "series.csv");
    let common = ["--series", series.as_str(), "--window", "6", "--hidden", "4", "--epochs", "3", "--out", d];
    ok(&[&["train-lstm"], &common[..]].concat());
    ok(&[&["train-hybrid", "--alpha", "0.5", "--staged"], &common[..]].concat());
    let sweep = ok(&[&["sweep-alpha", "--alphas", "0:1:0.25"], &common[..]].concat());
    assert_eq!(sweep.lines().count(), 5);
    let table = std::fs::read_to_string(p(dir.path(), "alpha_sweep.csv")).unwrap();
    assert_eq!(table.lines().next(), Some("alpha,val_rmae,is_argmin"));
    assert_eq!(table.matches(",true").count(), 1);

    let preds = p(dir.path(), "hybrid_val_predictions.csv");
    let out = ok(&["eval", "--metric", "rmae", "--truth", &preds, "--truth-column", "y_true", "--pred", &preds]);
    assert!(out.starts_with("rmae "), "{out}");

    let bad = aircast(&[&["train-hybrid", "--alpha", "1.5"], &common[..]].concat());
    assert!(!bad.status.success());
    assert!(String::from_utf8_lossy(&bad.stderr).contains("alpha"));
}

#[test]
fn eval_reports_length_mismatch() {
    let dir = tempfile::tempdir().unwrap();
    let truth = p(dir.path(), "truth.csv");
    let pred = p(dir.path(), "pred.csv");
    std::fs::write(&truth, "y\n1\n2\n3\n").unwrap();
    std::fs::write(&pred, "y\n1\n2\n").unwrap();
    let out = aircast(&["eval", "--metric", "rmae", "--truth", &truth, "--pred", &pred]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("length mismatch: 3 truth values vs 2 predictions"));
}

#[test]
fn usage_errors_exit_nonzero() {
    let out = aircast(&["frobnicate"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("Usage"));

    let out = aircast(&["ingest", "--input", "/definitely/not/here.csv"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("file not found"));

    let dir = tempfile::tempdir().unwrap();
    let ckpt = p(dir.path(), "bad.ckpt");
    std::fs::write(&ckpt, "aircast-checkpoint 1\nkind cnn\n").unwrap();
    let out = aircast(&["predict", "--model", &ckpt, "--frames", &ckpt]);
    assert_eq!(out.status.code(), Some(1));
}
