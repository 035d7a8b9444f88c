use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;
use subord_core::spectral::Measure;

fn subord(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_subord"))
        .args(args)
        .env_remove("SUBORD_OUT_DIR")
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn stdout_json(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).unwrap_or_else(|e| panic!("{e}: {}", String::from_utf8_lossy(&out.stdout)))
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn value_at(rows: &Value, i: usize) -> (f64, f64) {
    let v = &rows[i]["value"];
    (v[0].as_f64().unwrap(), v[1].as_f64().unwrap())
}

#[test]
fn eval_semicircle_at_i() {
    let out = subord(&["eval", "cauchy", "semicircle:0,1", "--at", "i"]);
    assert_eq!(code(&out), 0);
    let (re, im) = value_at(&stdout_json(&out), 0);
    assert!(re.abs() < 1e-6);
    assert!((im - (1.0 - 5f64.sqrt()) / 2.0).abs() < 1e-6);
}

#[test]
fn eval_dirac_and_haar() {
    let out = subord(&["eval", "cauchy", "dirac:0", "--at", "i"]);
    assert_eq!(code(&out), 0);
    let (re, im) = value_at(&stdout_json(&out), 0);
    assert!(re.abs() < 1e-15 && (im + 1.0).abs() < 1e-15);

    let out = subord(&["eval", "circle-cauchy", "haar_circle", "--at", "0.3+0.2i"]);
    assert_eq!(code(&out), 0);
    let (re, im) = value_at(&stdout_json(&out), 0);
    assert!(re.hypot(im) < 1e-8);
}

#[test]
fn eval_domain_violation_is_a_config_error() {
    let out = subord(&["eval", "cauchy", "semicircle", "--at", "1-1i"]);
    assert_eq!(code(&out), 2);
    let out = subord(&["eval", "psi", "haar_circle", "--at", "1.2"]);
    assert_eq!(code(&out), 2);
    let out = subord(&["eval", "cauchy", "no_such_family", "--at", "i"]);
    assert_eq!(code(&out), 2);
}

#[test]
fn eval_non_convergence_exits_3() {
    // |G| ~ 1e3 next to the atom at 3; a 1e-13 absolute residual is below roundoff
    let out = subord(&["eval", "subordination", "dirac:1", "dirac:2", "--at", "3+0.001i", "--tol", "1e-13"]);
    assert_eq!(code(&out), 3, "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn convolve_add_semicircles() {
    let dir = tempfile::tempdir().unwrap();
    let out = subord(&[
        "convolve-add",
        "semicircle:0,1",
        "semicircle:0,1",
        "--grid",
        "-3.5:3.5:281",
        "--im",
        "0.5,1,2",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let text = std::fs::read_to_string(dir.path().join("measure.json")).unwrap();
    let m = Measure::from_json(&text).unwrap();
    let m = m.as_line().unwrap();
    let (grid, samples) = m.density().unwrap();
    let mut worst = 0.0f64;
    for (i, s) in samples.iter().enumerate() {
        let t = grid.node(i);
        if t.abs() <= 1.9 * 2f64.sqrt() {
            let want = (8.0 - t * t).sqrt() / (4.0 * std::f64::consts::PI);
            worst = worst.max((s - want).abs());
        }
    }
    assert!(worst <= 5e-3, "sup error {worst}");
    let summary = read_json(&dir.path().join("summary.json"));
    assert_eq!(summary["pass"], Value::Bool(true));
    assert_eq!(summary["points"], 3 * 281);
    assert!(dir.path().join("table.json").exists());
    assert!(dir.path().join("run_meta.json").exists());
}

#[test]
fn convolve_add_diracs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.json");
    std::fs::write(
        &cfg,
        r#"{"command": "convolve-add", "measures": ["dirac:1", {"family": "atomic", "atoms": [[2.0, 1.0]]}],
            "grid": {"lo": 2.0, "hi": 4.0, "n": 401, "im_parts": [0.5]}, "etas": [0.02], "tol": 1e-9}"#,
    )
    .unwrap();
    let out = subord(&["convolve-add", "--config", cfg.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let m = Measure::from_json(&std::fs::read_to_string(dir.path().join("measure.json")).unwrap()).unwrap();
    let m = m.as_line().unwrap();
    let (grid, samples) = m.density().unwrap();
    let near: f64 = samples
        .iter()
        .enumerate()
        .filter(|(i, _)| (grid.node(*i) - 3.0).abs() <= 0.3)
        .map(|(_, s)| s * grid.step())
        .sum();
    assert!(near >= 0.9, "mass near 3: {near}");
}

#[test]
fn convolve_mult_haar_absorbs() {
    let dir = tempfile::tempdir().unwrap();
    let out = subord(&[
        "convolve-mult",
        "haar_circle",
        "circle_atoms:0.4,0.5,2.5,0.3,4.0,0.2",
        "--order",
        "10",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let rows = read_json(&dir.path().join("moments.json"));
    let rows = rows.as_array().unwrap();
    assert_eq!(rows.len(), 11);
    for row in &rows[1..] {
        let (re, im) = (row["re"].as_f64().unwrap(), row["im"].as_f64().unwrap());
        assert!(re.hypot(im) <= 1e-8);
    }
    let m = Measure::from_json(&std::fs::read_to_string(dir.path().join("measure.json")).unwrap()).unwrap();
    let density = m.as_circle().unwrap().density().unwrap();
    let uniform = 1.0 / std::f64::consts::TAU;
    assert!(density.iter().all(|d| (d - uniform).abs() < 1e-8));
}

#[test]
fn verify_lemma34_passes() {
    let dir = tempfile::tempdir().unwrap();
    let out = subord(&["verify", "lemma34", "--samples", "1000", "--seed", "7", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(code(&out), 0);
    let report = read_json(&dir.path().join("lemma34.json"));
    assert_eq!(report["identity"], "lemma34");
    assert_eq!(report["verdict"], "pass");
    assert_eq!(report["residuals"]["violations"], 0.0);
    let csv = std::fs::read_to_string(dir.path().join("lemma34.csv")).unwrap();
    assert_eq!(csv.lines().count(), 2);
    assert!(csv.lines().nth(1).unwrap().ends_with(",pass"));
}

#[test]
fn verify_failure_exits_1() {
    let dir = tempfile::tempdir().unwrap();
    // the identity residual sits at roundoff, far above 1e-20
    let out = subord(&["verify", "lemma34", "--samples", "200", "--tol", "1e-20", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(code(&out), 1);
    assert_eq!(read_json(&dir.path().join("lemma34.json"))["verdict"], "fail");
}

#[test]
fn verify_block_model_without_second_summand() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.json");
    std::fs::write(
        &cfg,
        r#"{"command": "verify", "identity": "thm31-block",
            "experiment": {"N": 48, "trials": 8, "eta_y": {"n": 2, "kraus": []}}}"#,
    )
    .unwrap();
    let out = subord(&["verify", "--config", cfg.to_str().unwrap(), "--seed", "3", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stdout));
    let report = read_json(&dir.path().join("thm31_block.json"));
    assert_eq!(report["seed"], 3);
    assert!(report["residuals"]["subordination"].as_f64().unwrap() < 1e-12);
}

#[test]
fn verify_rejects_misapplied_flags_and_unknown_names() {
    assert_eq!(code(&subord(&["verify", "lemma34", "--N", "10"])), 2);
    assert_eq!(code(&subord(&["verify", "prop99"])), 2);
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.json");
    std::fs::write(&cfg, r#"{"experiment": {"N": 10, "bogus": 1}}"#).unwrap();
    assert_eq!(code(&subord(&["verify", "prop33", "--config", cfg.to_str().unwrap()])), 2);
}

#[test]
fn config_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.json");
    std::fs::write(&cfg, r#"{"measures": ["semicircle", "semicircle"], "colour": "red"}"#).unwrap();
    assert_eq!(code(&subord(&["convolve-add", "--config", cfg.to_str().unwrap()])), 2);
    std::fs::write(&cfg, r#"{"command": "eval"}"#).unwrap();
    assert_eq!(code(&subord(&["convolve-add", "--config", cfg.to_str().unwrap()])), 2);
    assert_eq!(code(&subord(&["convolve-add", "semicircle", "--grid", "1:2"])), 2);
    assert_eq!(code(&subord(&["convolve-add", "semicircle", "semicircle", "--im", "0,1"])), 2);
    assert_eq!(code(&subord(&["convolve-mult", "semicircle", "haar_circle"])), 2);
}

#[test]
fn outputs_are_reproducible() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for dir in [&a, &b] {
        let d = dir.path().to_str().unwrap();
        let args = ["convolve-add", "arcsine", "bernoulli_pm1", "--grid", "-4:4:161", "--format", "csv", "--out", d];
        assert_eq!(code(&subord(&args)), 0);
        assert!(matches!(code(&subord(&["verify", "prop32", "--N", "40", "--trials", "6", "--seed", "5", "--out", d])), 0 | 1));
    }
    for name in ["measure.json", "table.csv", "summary.json", "prop32.json", "prop32.csv"] {
        let x = std::fs::read(a.path().join(name)).unwrap();
        let y = std::fs::read(b.path().join(name)).unwrap();
        assert!(x == y, "{name} differs between runs");
    }
}

#[test]
fn csv_cells_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path().to_str().unwrap();
    let common = ["semicircle", "marchenko_pastur:0.5", "--grid", "-2:5:29", "--im", "0.7", "--out", d];
    assert_eq!(code(&subord(&[&["convolve-add"][..], &common[..]].concat())), 0);
    let json = read_json(&dir.path().join("table.json"));
    assert_eq!(code(&subord(&[&["convolve-add"][..], &common[..], &["--format", "csv"][..]].concat())), 0);
    let csv = std::fs::read_to_string(dir.path().join("table.csv")).unwrap();
    for (row, line) in json.as_array().unwrap().iter().zip(csv.lines().skip(1)) {
        let cells: Vec<f64> = line.split(',').map(|c| c.parse().unwrap()).collect();
        assert_eq!(cells[2], row["omega1"][0].as_f64().unwrap());
        assert_eq!(cells[7], row["g"][1].as_f64().unwrap());
    }
}

#[test]
fn output_directory_from_environment() {
    let dir = tempfile::tempdir().unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_subord"))
        .args(["verify", "lemma34", "--samples", "50"])
        .env("SUBORD_OUT_DIR", dir.path())
        .output()
        .unwrap();
    assert_eq!(code(&out), 0);
    assert!(dir.path().join("lemma34.json").exists());
}
