use std::path::Path;
use std::process::{Command, Output};

use lunar_descent::io::{read_dataset, read_json};
use lunar_descent_core::PhysicalParams;
use serde_json::Value;

fn bin(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lunar-descent"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap_or(-1)
}

fn quick_config(dir: &Path) {
    std::fs::write(dir.join("quick.cfg"), "train.max_epochs = 3\ntrain.max_samples = 600\n").unwrap();
}

fn x0_string(r: &lunar_descent::io::DatasetRow) -> String {
    let scale = PhysicalParams::default().scaling().unwrap();
    let si = scale.state_to_si(&r.state());
    format!(
        "{},{},{},{},{}",
        si.r_m / 1000.0,
        si.v_mps,
        si.theta_rad.to_degrees(),
        si.omega_radps,
        si.m_kg
    )
}

#[test]
fn dataset_generation_is_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let a = bin(d, &["gen-dataset", "--n-traj", "20", "--seed", "7", "--out", "a.csv"]);
    let b = bin(d, &["gen-dataset", "--n-traj", "20", "--seed", "7", "--out", "b.csv"]);
    assert_eq!(code(&a), 0, "{}", String::from_utf8_lossy(&a.stderr));
    assert_eq!(code(&b), 0);
    assert_eq!(std::fs::read(d.join("a.csv")).unwrap(), std::fs::read(d.join("b.csv")).unwrap());
    let stdout = String::from_utf8_lossy(&a.stdout);
    assert!(stdout.contains("acceptance") && stdout.contains("always_on"));
    let stats: Value = read_json(&d.join("a.stats.json")).unwrap();
    let manifest: Value = read_json(&d.join("a.manifest.json")).unwrap();
    assert_eq!(stats["manifest_hash"], manifest["manifest_hash"]);
    assert_eq!(stats["stats"]["accepted"], 20);
}

#[test]
fn missing_config_warns_and_uses_defaults() {
    let dir = tempfile::tempdir().unwrap();
    let o = bin(dir.path(), &["gen-dataset", "--n-traj", "2", "--out", "d.csv", "--config", "absent.cfg"]);
    assert_eq!(code(&o), 0);
    assert!(String::from_utf8_lossy(&o.stderr).contains("warning"));
}

#[test]
fn usage_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let o = bin(d, &["train", "--dataset", "d.csv", "--target", "speed", "--out", "m.json"]);
    assert_eq!(code(&o), 2);
    let o = bin(d, &["oracle", "--x0", "1753,0,30", "--out", "o.json"]);
    assert_eq!(code(&o), 2);
    let o = bin(d, &["simulate", "--models", "none", "--x0", "1762.05,21.35,24.02,1.1274e-3,200", "--out", "s.json"]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("dry mass"));
    let o = bin(d, &["gen-dataset", "--n-traj", "2", "--out", "d.csv", "--config", "bad.cfg"]);
    assert_eq!(code(&o), 0);
    std::fs::write(d.join("bad.cfg"), "thrust = 1\n").unwrap();
    let o = bin(d, &["gen-dataset", "--n-traj", "2", "--out", "d.csv", "--config", "bad.cfg"]);
    assert_eq!(code(&o), 2);
}

#[test]
fn missing_models_are_listed() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::create_dir(dir.path().join("models")).unwrap();
    let o = bin(
        dir.path(),
        &["simulate", "--models", "models", "--x0", "1762.05,21.35,24.02,1.1274e-3,600", "--out", "s.json"],
    );
    assert_eq!(code(&o), 2);
    let err = String::from_utf8_lossy(&o.stderr);
    for f in ["tau.json", "psi.json", "sreg.json"] {
        assert!(err.contains(f), "{err}");
    }
}

#[test]
fn oracle_exit_codes_and_stage_log() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let ok = bin(d, &["oracle", "--x0", "1762.05,21.35,24.02,1.1274e-3,600", "--out", "t2.json"]);
    assert_eq!(code(&ok), 0, "{}", String::from_utf8_lossy(&ok.stderr));
    let sol: Value = read_json(&d.join("t2.json")).unwrap();
    let tf = sol["tf_s"].as_f64().unwrap();
    assert!((tf - 660.62).abs() < 6.6, "{tf}");
    assert!(sol["residual_norm"].as_f64().unwrap() < 1e-8);
    let header = std::fs::read_to_string(d.join("t2.trajectory.csv")).unwrap();
    assert!(header.starts_with("t_s,r_m,v_mps,theta_deg,omega_radps,m_kg,u,psi_rad\n"));

    let bad = bin(d, &["oracle", "--x0", "1753.07,-56.24,4.4335,5.6557e-4,432.44", "--out", "t1.json"]);
    if code(&bad) != 0 {
        assert_eq!(code(&bad), 3);
        let sol: Value = read_json(&d.join("t1.json")).unwrap();
        assert_eq!(sol["converged"], false);
        assert!(sol["message"].is_string());
    }
}

#[test]
fn oracle_from_trajectory_bank() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    assert_eq!(code(&bin(d, &["gen-dataset", "--n-traj", "15", "--seed", "4", "--out", "d.csv"])), 0);
    let rows = read_dataset(&d.join("d.csv")).unwrap();
    let far = rows.iter().filter(|r| r.traj_id == 3).max_by(|a, b| a.tau.total_cmp(&b.tau)).unwrap();
    let x0 = x0_string(far);
    let o = bin(d, &["oracle", "--x0", &x0, "--seed-from", "trajectory", "--dataset", "d.csv", "--out", "o.json"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let sol: Value = read_json(&d.join("o.json")).unwrap();
    assert_eq!(sol["converged"], true);
    assert!(sol["residual_norm"].as_f64().unwrap() < 1e-8);
    let scale = PhysicalParams::default().scaling().unwrap();
    assert!((sol["tf_s"].as_f64().unwrap() - scale.time_to_si(far.tau)).abs() < 0.5);
    let o = bin(d, &["oracle", "--x0", &x0, "--seed-from", "trajectory", "--out", "o.json"]);
    assert_eq!(code(&o), 2);
}

#[test]
fn train_simulate_montecarlo_and_replay() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    quick_config(d);
    assert_eq!(code(&bin(d, &["gen-dataset", "--n-traj", "12", "--seed", "1", "--out", "d.csv"])), 0);
    for t in ["tau", "psi", "sreg"] {
        let out = format!("models/{t}.json");
        let o = bin(d, &["train", "--dataset", "d.csv", "--target", t, "--out", &out, "--seed", "3", "--config", "quick.cfg"]);
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    }
    let model: Value = read_json(&d.join("models/psi.json")).unwrap();
    assert_eq!(model["layer_sizes"], serde_json::json!([5, 20, 20, 20, 1]));
    let manifest: Value = read_json(&d.join("models/psi.manifest.json")).unwrap();
    assert_eq!(model["metadata"]["manifest_hash"], manifest["manifest_hash"]);
    assert_eq!(
        model["metadata"]["dataset_hash"],
        manifest["manifest"]["inputs"][0]["sha256"]
    );

    let rows = read_dataset(&d.join("d.csv")).unwrap();
    let x0 = x0_string(rows.iter().max_by(|a, b| a.tau.total_cmp(&b.tau)).unwrap());
    let o = bin(d, &["simulate", "--models", "models", "--x0", &x0, "--out", "sim.json", "--config", "quick.cfg"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let sim: Value = read_json(&d.join("sim.json")).unwrap();
    let theta = sim["theta_f_deg"].as_f64().unwrap();
    let ep = sim["e_p_m"].as_f64().unwrap();
    assert!((ep - 2.0 * std::f64::consts::PI * 1_738_000.0 * theta.abs() / 360.0).abs() < 1e-6 * ep.max(1.0));

    let o = bin(
        d,
        &["montecarlo", "--models", "models", "--dataset", "d.csv", "--n", "1", "--seed", "2", "--out", "mc1.json", "--config", "quick.cfg"],
    );
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let mc: Value = read_json(&d.join("mc1.json")).unwrap();
    let run = &mc["runs"][0]["report"];
    assert_eq!(mc["n"], 1);
    assert_eq!(mc["max_vf_mps"], run["vf_mps"]);
    assert_eq!(mc["max_e_p_m"], run["e_p_m"]);
    assert_eq!(mc["total_fuel_kg"], run["fuel_kg"]);
    assert_eq!(mc["success_count"], if run["success"] == true { 1 } else { 0 });
    let hist = std::fs::read_to_string(d.join("mc1.vf_hist.csv")).unwrap();
    assert_eq!(hist.lines().count(), 41);

    for m in ["d.manifest.json", "models/sreg.manifest.json", "sim.manifest.json", "mc1.manifest.json"] {
        let o = bin(d, &["replay", m]);
        assert_eq!(code(&o), 0, "{m}: {}", String::from_utf8_lossy(&o.stderr));
        assert!(String::from_utf8_lossy(&o.stdout).contains("reproduced"));
    }

    // a changed input is detected before anything is rerun
    std::fs::write(d.join("d.csv"), "r,v\n").unwrap();
    let o = bin(d, &["replay", "models/sreg.manifest.json"]);
    assert_eq!(code(&o), 1);
}
