use std::path::Path;
use std::process::{Command, Output};

fn nanotouch(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_nanotouch"))
        .args(args)
        .env_remove("NANOTOUCH_CONFIG")
        .env("RUST_LOG", "warn")
        .output()
        .unwrap()
}

fn arg(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn event_lines(csv: &str, kind: &str) -> usize {
    csv.lines()
        .filter(|l| l.starts_with("# event,") && l.contains(kind))
        .count()
}

#[test]
fn unknown_flag_is_a_usage_error() {
    let out = nanotouch(&["sweep", "--bogus"]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("Usage"), "{err}");
}

#[test]
fn malformed_config_leaves_no_output() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.json");
    std::fs::write(&cfg, r#"{"stick": {"stiffness": "#).unwrap();
    let csv = dir.path().join("curve.csv");
    let out = nanotouch(&["sweep", "--config", arg(&cfg), "--out", arg(&csv)]);
    assert_eq!(out.status.code(), Some(2));
    assert!(!csv.exists());
    assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 1);
}

#[test]
fn missing_config_via_env_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("curve.csv");
    let out = Command::new(env!("CARGO_BIN_EXE_nanotouch"))
        .args(["sweep", "--out", arg(&csv)])
        .env("NANOTOUCH_CONFIG", dir.path().join("nope.json"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(!csv.exists());
}

#[test]
fn default_sweep_has_one_snap_each_way() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("curve.csv");
    let out = nanotouch(&["sweep", "--out", arg(&csv)]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let text = std::fs::read_to_string(&csv).unwrap();
    assert_eq!(event_lines(&text, "snap_in"), 1);
    assert_eq!(event_lines(&text, "snap_off"), 1);
}

#[test]
fn stiff_sweep_validates() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("stiff.json");
    std::fs::write(&cfg, r#"{"stick": {"stiffness": 10.0}}"#).unwrap();
    let csv = dir.path().join("curve.csv");
    let out = nanotouch(&["sweep", "--config", arg(&cfg), "--out", arg(&csv), "--validate"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let text = std::fs::read_to_string(&csv).unwrap();
    assert_eq!(event_lines(&text, ""), 0);
    let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(report["pass"], true);
}

#[test]
fn too_fast_sweep_fails_validation() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("curve.csv");
    let out = nanotouch(&[
        "sweep", "--out", arg(&csv), "--validate", "--z-start", "10e-9", "--z-end", "1e-9",
        "--speed", "2e-9",
    ]);
    assert_eq!(out.status.code(), Some(1), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(csv.exists());
}

#[test]
fn oracle_reports_equilibria() {
    let dir = tempfile::tempdir().unwrap();
    let scan = dir.path().join("scan.csv");
    let out = nanotouch(&["oracle", "--handle-pos", "5e-9", "--scan-out", arg(&scan)]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let set: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    let eqs = set["equilibria"].as_array().unwrap();
    // Inside the bistable window: contact, unstable, free.
    assert_eq!(eqs.len(), 3);
    assert_eq!(eqs.iter().filter(|e| e["stable"] == true).count(), 2);
    let rows = std::fs::read_to_string(&scan).unwrap().lines().count();
    assert!(rows > 1000);

    let out = nanotouch(&["oracle", "--handle-pos", "-1e-9"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn replay_steps_the_trajectory() {
    let dir = tempfile::tempdir().unwrap();
    let traj = dir.path().join("traj.txt");
    let mut text = String::from("handle_pos_m\n");
    for i in 0..1000 {
        text.push_str(&format!("{}\n", 10e-9 - i as f64 * 1e-12));
    }
    std::fs::write(&traj, text).unwrap();
    let out_path = dir.path().join("out.csv");
    let out = nanotouch(&["replay", "--trajectory", arg(&traj), "--out", arg(&out_path)]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(&out_path).unwrap();
    let mut lines = csv.lines();
    assert_eq!(
        lines.next().unwrap(),
        "time_s,handle_pos_m,tip_pos_m,tip_vel_m_s,handle_force_N,surface_force_N"
    );
    let rows: Vec<Vec<f64>> = lines
        .map(|l| l.split(',').map(|x| x.parse().unwrap()).collect())
        .collect();
    assert_eq!(rows.len(), 1000);
    assert_eq!(rows[999][1], 10e-9 - 999.0 * 1e-12);
    assert!((rows[999][0] - 0.1).abs() < 1e-12);

    std::fs::write(&traj, "1e-9\nbanana\n").unwrap();
    let out = nanotouch(&["replay", "--trajectory", arg(&traj), "--out", arg(&out_path)]);
    assert_eq!(out.status.code(), Some(2));
}
