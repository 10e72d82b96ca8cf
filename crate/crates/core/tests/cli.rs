use std::process::Command;

fn attnlab(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_attnlab")).args(args).output().unwrap()
}

fn write_config(dir: &std::path::Path, body: &str) -> String {
    let p = dir.join("c.toml");
    std::fs::write(&p, body).unwrap();
    p.to_string_lossy().into_owned()
}

#[test]
fn passing_run_exits_zero_and_writes_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let conf = write_config(dir.path(), "d = 3\nn = 100\nbeta = [1e6]\ntrials = 5\n");
    let out = dir.path().join("out");
    let o = attnlab(&["heatmap", "--config", &conf, "--out", out.to_str().unwrap(), "--trials", "7", "--seed", "2"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = std::fs::read_to_string(out.join("heatmap.csv")).unwrap();
    assert!(csv.lines().last().unwrap().ends_with(",7"));
    assert!(out.join("verdict.json").exists());
}

#[test]
fn failed_certification_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    // d = 2: β = 0.04 n^2 counts as a low cell, but the window holds only a couple of keys
    let conf = write_config(dir.path(), "d = 2\nn = 1000\nbeta = [40000.0]\ntrials = 5\n");
    let o = attnlab(&["heatmap", "--config", &conf, "--out", dir.path().join("o").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn bad_config_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let conf = write_config(dir.path(), "d = 3\nn = 10\ntrials = 0\n");
    let o = attnlab(&["heatmap", "--config", &conf]);
    assert_eq!(o.status.code(), Some(1));
    let o = attnlab(&["heatmap", "--config", "/nonexistent/file.toml"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn predict_prints_json() {
    let dir = tempfile::tempdir().unwrap();
    let conf = write_config(dir.path(), "d = 5\nn = 64\nbeta = [8.0]\n");
    let o = attnlab(&["predict", "--config", &conf, "--out", dir.path().join("o").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v[0]["regime"], "Critical");
}

#[test]
fn unknown_experiment_is_rejected() {
    let o = attnlab(&["nonsense", "--config", "x.toml"]);
    assert_ne!(o.status.code(), Some(0));
}
