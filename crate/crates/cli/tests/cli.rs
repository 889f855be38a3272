use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn regime(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_regime"))
        .args(args)
        .current_dir(cwd)
        .env_remove("REGIME_ARTIFACT_ROOT")
        .output()
        .expect("spawn regime")
}

fn json(out: &Output) -> serde_json::Value {
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).unwrap()
}

fn betas(v: &serde_json::Value) -> Vec<f64> {
    v["beta"].as_array().unwrap().iter().map(|b| b.as_f64().unwrap()).collect()
}

#[test]
fn l2_solution_of_one_equation() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("D.csv"), "x_1,x_2,y\n1,1,2\n").unwrap();
    let v = json(&regime(&["solve", "--method", "l2", "--data", "D.csv"], dir.path()));
    for b in betas(&v) {
        assert!((b - 1.0).abs() < 1e-12);
    }
}

#[test]
fn flow_agrees_with_q2_minimizer() {
    let dir = tempfile::tempdir().unwrap();
    let gen = regime(&["generate", "--d", "20", "--n", "8", "--r-star", "2", "--seed", "3", "--output", "D.csv"], dir.path());
    assert!(gen.status.success());
    assert!(dir.path().join("D.manifest.json").exists());
    let flow = betas(&json(&regime(&["flow", "--depth", "2", "--alpha", "1", "--data", "D.csv"], dir.path())));
    let q2 = betas(&json(&regime(&["solve", "--method", "q2", "--alpha", "1", "--data", "D.csv"], dir.path())));
    let gap: f64 = flow.iter().zip(&q2).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
    let norm: f64 = q2.iter().map(|b| b * b).sum::<f64>().sqrt();
    assert!(gap <= 1e-3 * norm, "gap {gap}");
}

#[test]
fn phase_writes_one_row_per_cell_and_reruns_identically() {
    let dir = tempfile::tempdir().unwrap();
    let args = ["phase", "--d", "6", "--N", "20", "--lifted-scales", "0.01,100", "--ks", "10,20", "--seed", "1", "--reps", "1", "--out", "o"];
    let out = regime(&args, dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let first = fs::read(dir.path().join("o/phase.csv")).unwrap();
    assert_eq!(String::from_utf8_lossy(&first).lines().count(), 1 + 4);
    let manifest: serde_json::Value = serde_json::from_slice(&fs::read(dir.path().join("o/phase.manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["command"], "phase");
    assert_eq!(manifest["seed"], 1);
    fs::remove_file(dir.path().join("o/phase.csv")).unwrap();
    let again = regime(&["--rerun", "o/phase.manifest.json"], dir.path());
    assert!(again.status.success(), "{}", String::from_utf8_lossy(&again.stderr));
    assert_eq!(fs::read(dir.path().join("o/phase.csv")).unwrap(), first);
}

#[test]
fn fig1_manifest_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let args = ["fig1", "--d", "20", "--r-star", "2", "--n-grid", "8,14", "--curve-n", "10", "--trials", "2", "--alpha-points", "4", "--seed", "5", "--out", "f"];
    let out = regime(&args, dir.path());
    assert!(out.status.code().is_some_and(|c| c == 0 || c == 3));
    let sweep = fs::read(dir.path().join("f/fig1_sweep.csv")).unwrap();
    let header = String::from_utf8_lossy(&sweep).lines().next().unwrap().to_string();
    assert!(header.starts_with("depth,n,alpha,alpha_scaled,mean_risk"));
    regime(&["--rerun", "f/fig1.manifest.json"], dir.path());
    assert_eq!(fs::read(dir.path().join("f/fig1_sweep.csv")).unwrap(), sweep);
}

#[test]
fn artifact_root_from_environment() {
    let dir = tempfile::tempdir().unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_regime"))
        .args(["penalty-table", "--points", "4"])
        .current_dir(dir.path())
        .env("REGIME_ARTIFACT_ROOT", "root")
        .output()
        .unwrap();
    assert!(out.status.success());
    let text = fs::read_to_string(dir.path().join("root/penalty_table.csv")).unwrap();
    let first_value = text.lines().nth(1).unwrap().split(',').next().unwrap();
    let v: f64 = first_value.parse().unwrap();
    assert!((v - 1e-3).abs() < 1e-15);
    let mantissa = first_value.split('e').next().unwrap();
    assert_eq!(mantissa.chars().filter(|c| c.is_ascii_digit()).count(), 17);
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(regime(&["no-such-command"], dir.path()).status.code(), Some(2));
    assert_eq!(regime(&["phase", "--d", "4"], dir.path()).status.code(), Some(2), "--seed is mandatory");
    fs::write(dir.path().join("D.csv"), "x_1,y\n1,2\n").unwrap();
    assert_eq!(regime(&["solve", "--method", "q2", "--data", "D.csv"], dir.path()).status.code(), Some(2));
    let missing = regime(&["solve", "--method", "l2", "--data", "nope.csv"], dir.path());
    assert_eq!(missing.status.code(), Some(1));
    let err: serde_json::Value = serde_json::from_slice(&missing.stderr).unwrap();
    assert!(err["message"].as_str().unwrap().contains("nope.csv") || err["error"] == "csv");
    let bad = regime(&["solve", "--method", "q2", "--alpha=-1", "--data", "D.csv"], dir.path());
    assert_eq!(bad.status.code(), Some(1));
}

#[test]
fn check_reports_a_table() {
    let dir = tempfile::tempdir().unwrap();
    let out = regime(&["check", "--only", "regularizer_suite", "--out", "c"], dir.path());
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.contains("[PASS] regularizer_suite"), "{text}");
    assert!(out.status.success());
    assert!(dir.path().join("c/check.json").exists());
}
