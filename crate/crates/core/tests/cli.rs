use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn visradio(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_visradio")).args(args).output().expect("run visradio")
}

fn path(dir: &Path, name: &str) -> String {
    dir.join(name).to_str().unwrap().to_owned()
}

/// A small generated dataset and a forest trained on it.
struct Fixture {
    dir: TempDir,
}

impl Fixture {
    fn new() -> Fixture {
        let dir = tempfile::tempdir().unwrap();
        let out = visradio(&[
            "generate",
            "--train-count",
            "300",
            "--validation-count",
            "60",
            "--out-dir",
            dir.path().to_str().unwrap(),
        ]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        let f = Fixture { dir };
        let out = visradio(&[
            "train",
            "--dataset",
            &f.file("train.csv"),
            "--classifier",
            "forest",
            "--model",
            &f.file("forest.json"),
            "--report",
            &f.file("forest.report.json"),
            "--grid-trees",
            "5,10",
            "--grid-depths",
            "6,12",
            "--folds",
            "3",
        ]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        f
    }

    fn file(&self, name: &str) -> String {
        path(self.dir.path(), name)
    }

    fn validation_row(&self) -> String {
        let text = std::fs::read_to_string(self.file("validation.csv")).unwrap();
        text.lines().nth(1).unwrap().to_owned()
    }
}

#[test]
fn train_writes_report_with_grid_counts() {
    let f = Fixture::new();
    let report: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(f.file("forest.report.json")).unwrap()).unwrap();
    let cv = &report["cross_validation"];
    assert_eq!(cv["fits"], 12);
    assert_eq!(cv["refits"], 1);
    assert_eq!(cv["entries"].as_array().unwrap().len(), 4);
    let timing = PathBuf::from(f.file("forest.report.timing.json"));
    assert!(timing.exists());
}

#[test]
fn evaluate_and_report() {
    let f = Fixture::new();
    let out = visradio(&[
        "evaluate",
        "--model",
        &f.file("forest.json"),
        "--dataset",
        &f.file("validation.csv"),
        "--metrics",
        &f.file("metrics.json"),
        "--confusion",
        &f.file("confusion.csv"),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let out = visradio(&["report", "--metrics", &f.file("metrics.json")]);
    assert!(out.status.success());
    let table = String::from_utf8(out.stdout).unwrap();
    let lines: Vec<&str> = table.lines().collect();
    assert_eq!(lines.len(), 2);
    assert!(lines[0].starts_with("source,model,instances,accuracy"));
    assert!(lines[1].contains(",forest,60,"));
}

#[test]
fn infer_prints_one_line() {
    let f = Fixture::new();
    let out = visradio(&["infer", "--model", &f.file("forest.json"), "--row", &f.validation_row()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8(out.stdout).unwrap();
    let fields: Vec<&str> = stdout.trim_end().split('\t').collect();
    assert_eq!(fields.len(), 3);
    assert!(["NO TX", "BBOX 1", "BBOX 2"].contains(&fields[0]));
    let confidence: f64 = fields[1].parse().unwrap();
    assert!((0.0..=1.0).contains(&confidence));
}

#[test]
fn malformed_row_is_an_input_error() {
    let f = Fixture::new();
    let mut row = f.validation_row();
    row.push_str(",1.0");
    let out = visradio(&["infer", "--model", &f.file("forest.json"), "--row", &row]);
    assert_eq!(out.status.code(), Some(2));
    assert!(out.stdout.is_empty());
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("error:"));
}

#[test]
fn layout_mismatch_is_an_input_error() {
    let f = Fixture::new();
    let out = visradio(&[
        "evaluate",
        "--model",
        &f.file("forest.json"),
        "--dataset",
        &f.file("validation.csv"),
        "--metrics",
        &f.file("m.json"),
        "--confusion",
        &f.file("c.csv"),
        "--layout",
        "cir-m32-p16-peak-bb5x2",
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(!Path::new(&f.file("m.json")).exists());
}

#[test]
fn corrupt_model_is_rejected() {
    let f = Fixture::new();
    let text = std::fs::read_to_string(f.file("forest.json")).unwrap();
    std::fs::write(f.file("bad.json"), &text[..text.len() / 2]).unwrap();
    let out = visradio(&["infer", "--model", &f.file("bad.json"), "--row", &f.validation_row()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(out.stdout.is_empty());
}

#[test]
fn bad_arguments_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let out = visradio(&["train", "--dataset", "x.csv", "--classifier", "svm", "--model", "m", "--report", "r"]);
    assert_eq!(out.status.code(), Some(2));
    let out = visradio(&["generate", "--folds", "1", "--out-dir", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    let out = visradio(&["frobnicate"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn runtime_failures_exit_1() {
    let dir = tempfile::tempdir().unwrap();
    let out = visradio(&["evaluate", "--model", &path(dir.path(), "missing.json"), "--dataset", "x", "--metrics", "m", "--confusion", "c"]);
    assert_eq!(out.status.code(), Some(1));
    // no frame is strong enough for this δ and the schedule has no silence
    let config = path(dir.path(), "config.json");
    std::fs::write(
        &config,
        r#"{"simulation": {"schedule": [{"transmitter": 0, "duration_ms": 2000}, {"transmitter": 1, "duration_ms": 2000}]}}"#,
    )
    .unwrap();
    let out = visradio(&[
        "generate",
        "--config",
        &config,
        "--train-count",
        "20",
        "--validation-count",
        "5",
        "--purge-threshold",
        "1e9",
        "--out-dir",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(!dir.path().join("train.csv").exists());
}
