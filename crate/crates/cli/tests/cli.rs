use std::path::PathBuf;
use std::process::{Command, Output};

fn pegame(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pegame")).args(args).output().unwrap()
}

fn scenario(name: &str) -> String {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../scenarios").join(name).display().to_string()
}

#[test]
fn short_simulation_writes_both_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let res = pegame(&["simulate", "--config", &scenario("paper_sec5.cfg"), "--out", out, "--t-end", "0.5"]);
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    let csv = std::fs::read_to_string(dir.path().join("trajectory.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 51);
    let report: serde_json::Value =
        serde_json::from_slice(&std::fs::read(dir.path().join("report.json")).unwrap()).unwrap();
    assert_eq!(report["mode"], "safe-robust-rl");
}

#[test]
fn start_inside_the_obstacle_exits_with_code_2() {
    let dir = tempfile::tempdir().unwrap();
    let text = std::fs::read_to_string(scenario("paper_sec5.cfg")).unwrap();
    let unsafe_cfg = text.replacen("pursuer_x = [0.0, 0.0]", "pursuer_x = [11.0, 10.0]", 1);
    assert_ne!(text, unsafe_cfg);
    let path = dir.path().join("unsafe.cfg");
    std::fs::write(&path, unsafe_cfg).unwrap();
    let res = pegame(&["simulate", "--config", path.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert_eq!(res.status.code(), Some(2));
    assert!(!dir.path().join("trajectory.csv").exists());
}

#[test]
fn usage_errors_exit_with_code_64() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let cfg = scenario("paper_sec5.cfg");
    assert_eq!(pegame(&["simulate", "--config", &cfg]).status.code(), Some(64));
    assert_eq!(pegame(&["simulate", "--config", &cfg, "--out", out, "--mode", "bogus"]).status.code(), Some(64));
    assert_eq!(pegame(&["compare", "--config", &cfg, "--modes", "", "--out", out]).status.code(), Some(64));
    assert_eq!(pegame(&["compare", "--config", &cfg, "--modes", " , ", "--out", out]).status.code(), Some(64));
}

#[test]
fn help_is_not_an_error() {
    assert!(pegame(&["--help"]).status.success());
}

#[test]
fn gare_oracle_prints_ten_weights() {
    let res = pegame(&["oracle", "gare", "--config", &scenario("lq_oracle.cfg")]);
    assert!(res.status.success());
    let stdout = String::from_utf8(res.stdout).unwrap();
    let weights: Vec<f64> = stdout
        .lines()
        .find_map(|l| l.strip_prefix("weights "))
        .unwrap()
        .split_whitespace()
        .map(|w| w.parse().unwrap())
        .collect();
    assert_eq!(weights.len(), 10);
    assert!(weights[..4].iter().all(|&w| w > 0.0));
}

#[test]
fn compare_runs_each_mode() {
    let dir = tempfile::tempdir().unwrap();
    let text = std::fs::read_to_string(scenario("paper_sec5.cfg")).unwrap().replacen("t_end = 25.0", "t_end = 0.5", 1);
    let path = dir.path().join("short.cfg");
    std::fs::write(&path, text).unwrap();
    let out = dir.path().join("cmp");
    let res = pegame(&[
        "compare", "--config", path.to_str().unwrap(), "--modes", "safe-robust-rl,robust-rl", "--out", out.to_str().unwrap(),
    ]);
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    let table = String::from_utf8(res.stdout).unwrap();
    assert!(table.contains("safe-robust-rl") && table.contains("robust-rl"));
}
