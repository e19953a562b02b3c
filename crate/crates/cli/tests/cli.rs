use std::path::PathBuf;
use std::process::{Command, Output};

fn pima() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data/pima.csv")
}

fn gaplm(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gaplm"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn pima_args<'a>(sub: &'a str, data: &'a str) -> Vec<&'a str> {
    vec![
        sub,
        "--data",
        data,
        "--linear",
        "NumPreg,DBP,DPF,PGC",
        "--nonparametric",
        "BMI,AGE",
        "--knots",
        "0,0",
    ]
}

fn json(out: &Output) -> serde_json::Value {
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).expect("stdout is JSON")
}

#[test]
fn fit_reports_complete_cases() {
    let data = pima();
    let v = json(&gaplm(&pima_args("fit", data.to_str().unwrap())));
    assert_eq!(v["data"]["n"], 724);
    assert_eq!(v["converged"], true);
    let names: Vec<&str> = v["coefficients"]
        .as_array()
        .unwrap()
        .iter()
        .map(|c| c["name"].as_str().unwrap())
        .collect();
    assert_eq!(names, ["NumPreg", "DBP", "DPF", "PGC"]);
    assert_eq!(v["config"]["knots"], "0,0");
}

fn selected(v: &serde_json::Value) -> Vec<String> {
    v["selected"]
        .as_array()
        .unwrap()
        .iter()
        .map(|s| s.as_str().unwrap().to_string())
        .collect()
}

#[test]
fn select_keeps_dpf_and_pgc() {
    let data = pima();
    let data = data.to_str().unwrap();
    for penalty in ["scad", "bic"] {
        let mut args = pima_args("select", data);
        args.extend(["--penalty", penalty]);
        let v = json(&gaplm(&args));
        assert_eq!(selected(&v), ["DPF", "PGC"], "{penalty}");
    }
    let mut args = pima_args("select", data);
    args.extend(["--penalty", "lasso"]);
    assert_eq!(selected(&json(&gaplm(&args))).len(), 4);
}

#[test]
fn out_dir_gets_report_and_config_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let data = pima();
    let out = dir.path().join("run");
    let mut args = pima_args("select", data.to_str().unwrap());
    args.extend(["--out", out.to_str().unwrap()]);
    let first = gaplm(&args);
    assert!(first.status.success());
    let text = String::from_utf8_lossy(&first.stdout);
    assert!(text.contains("selected = [DPF, PGC]"), "{text}");
    let report = out.join("select.json");
    let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&report).unwrap()).unwrap();

    // re-running from the embedded config reproduces the report
    let rerun = gaplm(&["select", "--config", report.to_str().unwrap()]);
    let w = json(&rerun);
    assert_eq!(v["coefficients"], w["coefficients"]);
    assert_eq!(v["lambda"], w["lambda"]);
}

#[test]
fn usage_errors_exit_one() {
    assert_eq!(gaplm(&["fit", "--no-such-flag"]).status.code(), Some(1));
    assert_eq!(gaplm(&["fit"]).status.code(), Some(1));
    let data = pima();
    let mut args = pima_args("select", data.to_str().unwrap());
    args.extend(["--penalty", "ridge"]);
    let out = gaplm(&args);
    assert_eq!(out.status.code(), Some(1));
    let err: serde_json::Value = serde_json::from_slice(&out.stderr).unwrap();
    assert!(err["error"]["message"].as_str().unwrap().contains("ridge"));
}

#[test]
fn data_errors_exit_two() {
    assert_eq!(gaplm(&["fit", "--data", "/no/such/file.csv"]).status.code(), Some(2));
    let data = pima();
    let out = gaplm(&["fit", "--data", data.to_str().unwrap(), "--linear", "Nope", "--response", "Diabetes"]);
    assert_eq!(out.status.code(), Some(2));
    let err: serde_json::Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(err["error"]["kind"], "unknown-column");

    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.csv");
    std::fs::write(&bad, "y,a\n1,2\n0,abc\n").unwrap();
    let out = gaplm(&["fit", "--data", bad.to_str().unwrap(), "--linear", "a", "--response", "y"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("abc"));
}

#[test]
fn simulate_is_deterministic_and_writes_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let run = |name: &str| {
        let out = dir.path().join(name);
        let status = gaplm(&[
            "simulate", "--scenario", "s1", "--n", "60", "--reps", "3", "--seed", "7", "--knots", "1,1",
            "--lambda-grid", "0.01:10:8", "--plot-points", "5", "--out", out.to_str().unwrap(),
        ]);
        assert!(status.status.success(), "{}", String::from_utf8_lossy(&status.stderr));
        out
    };
    let a = run("a");
    let b = run("b");
    for file in ["table1.tsv", "replicates.csv", "summary.json", "curves.tsv"] {
        let x = std::fs::read(a.join(file)).unwrap();
        let y = std::fs::read(b.join(file)).unwrap();
        assert_eq!(x, y, "{file} differs between identical seeds");
    }
    let table = std::fs::read_to_string(a.join("table1.tsv")).unwrap();
    assert!(table.lines().next().unwrap().starts_with("method\tC\tI\tMRME"));
    assert!(table.contains("oracle\t5.0000\t0.0000"));
}

#[test]
fn missing_seed_is_generated_and_recorded() {
    let dir = tempfile::tempdir().unwrap();
    let out = gaplm(&[
        "simulate", "--n", "50", "--reps", "1", "--knots", "1,1", "--methods", "oracle", "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert!(out.status.success());
    let stderr = String::from_utf8_lossy(&out.stderr);
    let seed: u64 = stderr
        .lines()
        .find_map(|l| l.strip_prefix("seed: "))
        .expect("seed printed")
        .parse()
        .unwrap();
    let v: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("summary.json")).unwrap()).unwrap();
    assert_eq!(v["config"]["seed"], seed);
}
