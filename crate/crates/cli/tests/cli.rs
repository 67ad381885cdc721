use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn run(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_layoutrank"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("binary runs")
}

fn ok(dir: &Path, args: &[&str]) -> Value {
    let out = run(dir, args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).expect("summary is JSON")
}

fn error_of(out: &Output) -> String {
    let v: Value = serde_json::from_slice(&out.stderr).expect("error is JSON");
    v["error"].as_str().expect("error message").to_string()
}

#[test]
fn gen_pairs_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    for name in ["a.jsonl", "b.jsonl"] {
        ok(dir.path(), &["gen-pairs", "--exp", "exp1", "-n", "100", "--seed", "7", "-o", name]);
    }
    let a = std::fs::read(dir.path().join("a.jsonl")).unwrap();
    assert_eq!(a, std::fs::read(dir.path().join("b.jsonl")).unwrap());
    assert_eq!(a.iter().filter(|&&b| b == b'\n').count(), 100);
    let other = run(dir.path(), &["gen-pairs", "--exp", "exp1", "-n", "100", "--seed", "8"]);
    assert_ne!(other.stdout, a);
}

#[test]
fn rulebook_optimum_with_free_bars() {
    let dir = tempfile::tempdir().unwrap();
    let v = ok(
        dir.path(),
        &["optimize", "--oracle", "rulebook", "--exp", "exp1", "--free-bars", "--out-dir", "opt"],
    );
    let p = &v["best"]["params"];
    assert_eq!((p["num_bars"].as_u64(), p["aspect_ratio"].as_f64(), p["bandwidth"].as_f64()), (Some(2), Some(4.0), Some(0.85)));
    for f in ["best.json", "top.csv", "best.svg"] {
        assert!(dir.path().join("opt").join(f).is_file(), "{f}");
    }
    let top = std::fs::read_to_string(dir.path().join("opt/top.csv")).unwrap();
    assert_eq!(top.lines().count(), 11);
    assert!(std::fs::read_to_string(dir.path().join("opt/best.svg")).unwrap().starts_with("<svg"));
}

#[test]
fn optimize_reads_csv_data_and_reports_no_solution() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("d.csv"), "category,value\nq1,4\nq2,7\nq3,2\nq4,5\n").unwrap();
    let v = ok(dir.path(), &["optimize", "--oracle", "rulebook", "--data", "d.csv", "--pin", "bandwidth=0.25"]);
    assert_eq!(v["best"]["params"]["num_bars"], 4);
    assert_eq!(v["best"]["params"]["bandwidth"], 0.25);
    assert_eq!(v["feasible"], 9);
    let out = run(dir.path(), &["optimize", "--oracle", "rulebook", "--data", "d.csv", "--max-width", "1"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(error_of(&out).contains("no feasible layout"));
}

#[test]
fn failures_are_machine_readable() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(dir.path(), &["gen-pairs", "--bogus"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(error_of(&out).contains("--bogus"));
    let out = run(dir.path(), &["train", "--data", "missing.jsonl"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(error_of(&out).contains("missing.jsonl"));
    std::fs::write(dir.path().join("bad.jsonl"), "{not json\n").unwrap();
    let out = run(dir.path(), &["eval", "--data", "bad.jsonl"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(!error_of(&out).is_empty());
    let out = run(dir.path(), &["train"]);
    assert!(error_of(&out).contains("--data"));
    assert!(run(dir.path(), &["--help"]).status.success());
    assert!(run(dir.path(), &["--version"]).status.success());
}

#[test]
fn flags_override_config_file() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(
        dir.path().join("cfg.json"),
        r#"{"gen-pairs": {"exp": "exp1", "count": 12, "seed": 3}}"#,
    )
    .unwrap();
    let v = ok(dir.path(), &["--config", "cfg.json", "gen-pairs", "-o", "a.jsonl"]);
    assert_eq!(v["pairs"], 12);
    let v = ok(dir.path(), &["--config", "cfg.json", "gen-pairs", "-n", "5", "-o", "b.jsonl"]);
    assert_eq!(v["pairs"], 5);
    let direct = run(dir.path(), &["gen-pairs", "--exp", "exp1", "-n", "12", "--seed", "3"]);
    assert_eq!(std::fs::read(dir.path().join("a.jsonl")).unwrap(), direct.stdout);
    std::fs::write(dir.path().join("typo.json"), r#"{"gen-pairs": {"cuont": 12}}"#).unwrap();
    let out = run(dir.path(), &["--config", "typo.json", "gen-pairs"]);
    assert!(error_of(&out).contains("cuont"));
}

#[test]
fn pipeline_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(d, &["gen-pairs", "--exp", "exp1", "-n", "400", "--seed", "1", "-o", "pairs.jsonl"]);
    let cal = ok(d, &["calibrate-oracle", "-n", "1000", "--seed", "2", "-o", "oracle.json"]);
    assert!((cal["expected_unanimity"].as_f64().unwrap() - 0.456).abs() < 1e-6);
    let lab = ok(d, &["label", "--pairs", "pairs.jsonl", "--oracle", "oracle.json", "-o", "labeled.jsonl"]);
    let kept = lab["label"]["kept"].as_u64().unwrap();
    assert!(kept > 100 && kept < 300, "{kept}");
    let tr = ok(
        d,
        &["train", "--data", "labeled.jsonl", "--epochs", "30", "-o", "model.json", "--loss-csv", "loss.csv"],
    );
    assert_eq!(tr["method"], "neural");
    let loss = std::fs::read_to_string(d.join("loss.csv")).unwrap();
    assert_eq!(loss.lines().count(), 31);
    ok(d, &["train", "--data", "labeled.jsonl", "--method", "ranksvm", "-o", "svm.json"]);
    let ev = ok(
        d,
        &["eval", "--data", "labeled.jsonl", "--method", "neural,ranksvm", "--runs", "2", "--epochs", "30", "-o", "eval.json"],
    );
    assert_eq!(ev["results"].as_array().unwrap().len(), 2);
    let an = ok(d, &["analyze", "--model", "model.json", "--data", "labeled.jsonl", "--out-dir", "analysis"]);
    assert!(an["correlations"]["bandwidth"].as_f64().unwrap() > 0.0);
    for f in ["box.csv", "heat.csv", "correlations.csv", "agreement.json"] {
        assert!(d.join("analysis").join(f).is_file(), "{f}");
    }
    let imp = ok(d, &["resample", "importance", "--data", "labeled.jsonl", "-o", "imp.json"]);
    assert_eq!(imp["mode"], "importance");
    ok(d, &["gen-pairs", "--grid", "imp.json", "-n", "10", "--provenance", "importance", "-o", "more.jsonl"]);
    let grd = ok(d, &["resample", "gradient", "--model", "model.json", "-o", "grad.json"]);
    assert!(grd["cells_after"].as_u64().unwrap() >= grd["cells_before"].as_u64().unwrap());
    let opt = ok(d, &["optimize", "--model", "model.json", "--bars", "6"]);
    assert_eq!(opt["best"]["params"]["num_bars"], 6);
    let opt = ok(d, &["optimize", "--model", "svm.json", "--bars", "6"]);
    assert_eq!(opt["feasible"], 63);
}
