use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_kde-ssi"))
        .args(args)
        .env("KDE_SSI_THREADS", "1")
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = run(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn read_json(p: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(p).unwrap()).unwrap()
}

/// Six clean samples per class: four train, one val, one test.
fn tiny_data(dir: &Path) -> std::path::PathBuf {
    let p = dir.join("d.kdss");
    ok(&["synth-data", "--samples-per-class", "6", "--noise", "0.02", "--amplitude-jitter", "0.05", "--timing-jitter", "5", "--seed", "4", "--out", s(&p)]);
    p
}

#[test]
fn help_and_usage_errors() {
    assert_eq!(run(&["--help"]).status.code(), Some(0));
    let out = run(&["train", "--bogus"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("Usage"));
    assert_eq!(run(&["no-such-command"]).status.code(), Some(1));
    assert_eq!(run(&[]).status.code(), Some(1));
}

#[test]
fn missing_input_names_the_path() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("absent.kdss");
    let out = run(&["train", "--data", s(&missing), "--out", s(&dir.path().join("m.kdsm"))]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("absent.kdss"));

    let bad = dir.path().join("bad.kdss");
    std::fs::write(&bad, b"not a dataset").unwrap();
    let out = run(&["evaluate", "--model", s(&bad), "--data", s(&bad)]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("bad.kdss"));
}

#[test]
fn memorized_model_scores_perfectly_on_its_training_split() {
    let dir = tempfile::tempdir().unwrap();
    let data = tiny_data(dir.path());
    let model = dir.path().join("m.kdsm");
    let common = ["--arch", "compact-teacher", "--epochs", "150", "--patience", "150", "--lr", "0.01", "--batch-size", "16"];
    let mut args = vec!["train", "--data", s(&data), "--seed", "2", "--out", s(&model)];
    args.extend(common);
    ok(&args);
    let report = dir.path().join("eval");
    let out = ok(&["evaluate", "--model", s(&model), "--data", s(&data), "--split", "train", "--seed", "2", "--out", s(&report)]);
    assert!(out.contains("accuracy 1.0000"), "{out}");
    let m = read_json(&report.join("metrics.json"));
    assert_eq!(m["accuracy"], 1.0);
    let confusion = std::fs::read_to_string(report.join("confusion.csv")).unwrap();
    assert_eq!(confusion.lines().count(), 27);
    assert!(confusion.lines().next().unwrap().contains("Alfa"));

    // rerun: identical bytes
    let again = dir.path().join("m2.kdsm");
    let mut args = vec!["train", "--data", s(&data), "--seed", "2", "--out", s(&again)];
    args.extend(common);
    ok(&args);
    assert_eq!(std::fs::read(&model).unwrap(), std::fs::read(&again).unwrap());
}

#[test]
fn ensemble_distill_and_bench() {
    let dir = tempfile::tempdir().unwrap();
    let data = tiny_data(dir.path());
    let ens = dir.path().join("ens");
    ok(&["train-ensemble", "--n", "2", "--data", s(&data), "--arch", "compact-teacher", "--epochs", "2", "--seed", "42", "--out", s(&ens)]);
    let manifest = read_json(&ens.join("ensemble.json"));
    assert_eq!(manifest["n"], 2);
    assert_eq!(manifest["members"].as_array().unwrap().len(), 2);

    let student = dir.path().join("s.kdsm");
    ok(&["distill", "--teacher", s(&ens), "--t", "10", "--alpha", "0.5", "--data", s(&data), "--arch", "compact-student", "--epochs", "2", "--seed", "42", "--out", s(&student)]);
    ok(&["evaluate", "--model", s(&ens), "--data", s(&data), "--seed", "42"]);

    let out = run(&["distill", "--teacher", s(&ens), "--t", "0", "--data", s(&data), "--out", s(&student)]);
    assert_eq!(out.status.code(), Some(1));

    let bench = dir.path().join("bench.json");
    ok(&["bench", "--teacher", s(&ens), "--student", s(&student), "--batch", "2", "--repetitions", "2", "--out", s(&bench)]);
    let b = read_json(&bench);
    assert_eq!(b["teacher_members"], 2);
    assert!(b["student"]["warmup"].as_u64().unwrap() >= 10);
}

#[test]
fn grid_reports_twelve_cells_over_three_seeds() {
    let dir = tempfile::tempdir().unwrap();
    let data = tiny_data(dir.path());
    let args = |out: &Path| {
        vec![
            "grid".to_string(),
            "--data".into(),
            s(&data).into(),
            "--seeds".into(),
            "1,2,3".into(),
            "--teacher-arch".into(),
            "compact-student".into(),
            "--student-arch".into(),
            "compact-student".into(),
            "--epochs".into(),
            "1".into(),
            "--out".into(),
            s(out).into(),
        ]
    };
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    for out in [&a, &b] {
        let v = args(out);
        ok(&v.iter().map(String::as_str).collect::<Vec<_>>());
    }
    let report = read_json(&a.join("report.json"));
    let cells = report["cells"].as_array().unwrap();
    assert_eq!(cells.len(), 12);
    for c in cells {
        assert_eq!(c["accuracies"].as_array().unwrap().len(), 3);
    }
    assert_eq!(report["seeds"], serde_json::json!([1, 2, 3]));
    assert_eq!(
        std::fs::read(a.join("report.json")).unwrap(),
        std::fs::read(b.join("report.json")).unwrap()
    );
    assert_eq!(
        std::fs::read(a.join("report.csv")).unwrap(),
        std::fs::read(b.join("report.csv")).unwrap()
    );
}

#[test]
fn trial_to_segments() {
    let dir = tempfile::tempdir().unwrap();
    let raw = dir.path().join("trial.csv");
    let env = dir.path().join("env.csv");
    let words = dir.path().join("words");
    let centers: Value = serde_json::from_str(&ok(&["synth-data", "--trial", "--word-label", "7", "--seed", "3", "--out", s(&raw)])).unwrap();
    assert_eq!(centers["centers"].as_array().unwrap().len(), 10);
    ok(&["process", "--in", s(&raw), "--out", s(&env)]);
    let header = std::fs::read_to_string(&env).unwrap();
    assert!(header.starts_with("sample,lao,dao,zm\n50,"));
    ok(&["extract", "--in", s(&env), "--out-dir", s(&words)]);
    let index = read_json(&words.join("index.json"));
    let segments = index["segments"].as_array().unwrap();
    assert_eq!(segments.len(), 10);
    assert!(segments.iter().all(|seg| seg["label"] == 7));
    let first = std::fs::read_to_string(words.join("word_00.csv")).unwrap();
    assert_eq!(first.lines().count(), 1501);
}

#[test]
fn config_file_mirrors_flags() {
    let dir = tempfile::tempdir().unwrap();
    let data = tiny_data(dir.path());
    let cfg = dir.path().join("c.json");
    std::fs::write(&cfg, r#"{"epochs": 3, "batch-size": 8, "arch": "compact-student", "seed": 5}"#).unwrap();
    let model = dir.path().join("m.kdsm");
    ok(&["train", "--config", s(&cfg), "--data", s(&data), "--epochs", "1", "--out", s(&model)]);
    let h = read_json(&dir.path().join("m.kdsm.history.json"));
    assert_eq!(h["epochs"].as_array().unwrap().len(), 1);
    // batch size 8 over 104 training samples
    assert_eq!(h["step_losses"].as_array().unwrap().len(), 13);

    std::fs::write(&cfg, r#"{"no_such_flag": 1}"#).unwrap();
    let out = run(&["train", "--config", s(&cfg), "--data", s(&data), "--out", s(&model)]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("no_such_flag"));
}
