use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;
use tpcnet::dataset::read_dataset;

fn tpcnet(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tpcnet"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(dir: &Path, args: &[&str]) -> Value {
    let out = tpcnet(dir, args);
    assert!(
        out.status.success(),
        "{args:?}: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    serde_json::from_slice(&out.stdout).expect("JSON on stdout")
}

fn fails(dir: &Path, args: &[&str]) -> String {
    let out = tpcnet(dir, args);
    assert!(!out.status.success(), "{args:?} succeeded");
    let err = String::from_utf8(out.stderr).unwrap();
    assert_eq!(err.trim_end().lines().count(), 1, "{err}");
    assert!(err.starts_with("error: "), "{err}");
    err
}

/// gen + teach + one-epoch models, shared by several tests.
fn workspace(n: &str) -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(d, &["gen", "--n", n, "--out", "raw.tpcd"]);
    ok(d, &["teach", "--in", "raw.tpcd", "--out", "lab.tpcd"]);
    ok(d, &["gen", "--n", "24", "--out", "vraw.tpcd", "--seed", "77"]);
    ok(d, &["teach", "--in", "vraw.tpcd", "--out", "val.tpcd"]);
    std::fs::create_dir(d.join("models")).unwrap();
    for stage in ["baseline", "deconv", "peaks"] {
        let out = format!("models/{stage}.tpnn");
        ok(d, &["train", "--stage", stage, "--in", "lab.tpcd", "--val", "val.tpcd", "--out", &out, "--epochs", "1"]);
    }
    dir
}

#[test]
fn gen_writes_requested_records_deterministically() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let v = ok(d, &["gen", "--n", "100", "--out", "a.tpcd", "--seed", "5"]);
    assert_eq!(v["records"], 100);
    ok(d, &["gen", "--n", "100", "--out", "b.tpcd", "--seed", "5"]);
    ok(d, &["gen", "--n", "100", "--out", "c.tpcd", "--seed", "6"]);
    let (a, b, c) = (
        std::fs::read(d.join("a.tpcd")).unwrap(),
        std::fs::read(d.join("b.tpcd")).unwrap(),
        std::fs::read(d.join("c.tpcd")).unwrap(),
    );
    assert_eq!(a, b);
    assert_ne!(a, c);
    let (h, recs) = read_dataset(d.join("a.tpcd")).unwrap();
    assert_eq!(h.count, 100);
    assert!(h.flags.truth && !h.flags.labels);
    assert_eq!(recs.len(), 100);
}

#[test]
fn hitless_data_teaches_empty_score_maps() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    std::fs::write(d.join("quiet.json"), r#"{"gen": {"hits_per_trace": [0, 0]}}"#).unwrap();
    ok(d, &["--config", "quiet.json", "gen", "--n", "30", "--out", "q.tpcd"]);
    let v = ok(d, &["teach", "--in", "q.tpcd", "--out", "ql.tpcd"]);
    assert_eq!(v["teacher_hits"], 0);
    let (h, recs) = read_dataset(d.join("ql.tpcd")).unwrap();
    assert!(h.flags.labels && h.flags.truth);
    assert!(recs
        .iter()
        .all(|r| r.labels.as_ref().unwrap().scores.iter().all(|&s| s == 0)));

    ok(d, &["teach", "--in", "q.tpcd", "--out", "again.tpcd"]);
    assert_eq!(
        std::fs::read(d.join("ql.tpcd")).unwrap(),
        std::fs::read(d.join("again.tpcd")).unwrap()
    );
}

#[test]
fn toy_pipeline_runs_end_to_end() {
    let dir = workspace("100");
    let d = dir.path();
    let csv = std::fs::read_to_string(d.join("models/peaks.tpnn.loss.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("epoch,loss_train,loss_val"));
    assert!(lines.next().unwrap().starts_with("1,"));
    let report: Value =
        serde_json::from_str(&std::fs::read_to_string(d.join("models/peaks.tpnn.report.json")).unwrap()).unwrap();
    assert_eq!(report["best_epoch"], 1);

    let metrics = ok(d, &["eval", "--models", "models", "--in", "val.tpcd"]);
    let stages = metrics["stages"].as_array().unwrap();
    assert_eq!(stages.len(), 3);
    assert!(stages[0]["rel_error_median"].as_f64().unwrap().is_finite());
    assert!(stages[2]["detection_accuracy"].as_f64().is_some());

    let v = ok(d, &["infer", "--models", "models", "--in", "val.tpcd", "--out", "cloud.json"]);
    assert_eq!(v["events"], 1, "24 traces share event 0");
    let cloud: Value = serde_json::from_str(&std::fs::read_to_string(d.join("cloud.json")).unwrap()).unwrap();
    assert_eq!(cloud.as_array().unwrap().len(), 1);

    let b = ok(d, &["bench", "--in", "val.tpcd", "--models", "models", "--repeat", "5"]);
    assert_eq!(b["classical"]["samples"].as_array().unwrap().len(), 5);
    assert_eq!(b["cnn"]["samples"].as_array().unwrap().len(), 5);
    assert!(b["speedup"].as_f64().unwrap() > 0.0);
}

#[test]
fn infer_on_empty_dataset_gives_empty_cloud() {
    let dir = workspace("16");
    let d = dir.path();
    ok(d, &["gen", "--n", "0", "--out", "empty.tpcd"]);
    let v = ok(d, &["infer", "--models", "models", "--in", "empty.tpcd", "--out", "cloud.csv"]);
    assert_eq!(v["events"], 0);
    assert_eq!(
        std::fs::read_to_string(d.join("cloud.csv")).unwrap(),
        "event_id,pad_id,x,y,t,q\n"
    );
}

#[test]
fn errors_are_one_line_and_nonzero() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(d, &["gen", "--n", "10", "--out", "raw.tpcd"]);
    let e = fails(d, &["train", "--stage", "peaks", "--in", "raw.tpcd", "--val", "raw.tpcd", "--out", "m.tpnn"]);
    assert!(e.contains("no label block"), "{e}");

    let e = fails(d, &["bench", "--in", "raw.tpcd", "--pipeline", "cnn", "--models", "nowhere"]);
    assert!(e.contains("nowhere"), "{e}");
    fails(d, &["bench", "--in", "raw.tpcd", "--pipeline", "both"]);
    fails(d, &["teach", "--in", "missing.tpcd", "--out", "x.tpcd"]);

    let mut bytes = std::fs::read(d.join("raw.tpcd")).unwrap();
    bytes[100] ^= 1;
    std::fs::write(d.join("bad.tpcd"), &bytes).unwrap();
    let e = fails(d, &["teach", "--in", "bad.tpcd", "--out", "x.tpcd"]);
    assert!(e.contains("crc"), "{e}");

    std::fs::write(d.join("bad.json"), "{\"gold\": {\"iterations\": 0}}").unwrap();
    fails(d, &["--config", "bad.json", "gen", "--n", "1", "--out", "y.tpcd"]);
}
