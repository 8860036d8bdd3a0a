use std::path::PathBuf;
use std::process::Command;

fn burgers() -> Command {
    Command::new(env!("CARGO_BIN_EXE_burgers"))
}

fn config(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name)
}

#[test]
fn mesh_dump_lists_counts() {
    let out = burgers().args(["mesh", "-n", "2"]).output().unwrap();
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.starts_with("vertices 9"), "{text}");
    assert!(text.contains("triangles 8"));
}

#[test]
fn steady_reports_diagnostics() {
    let out = burgers()
        .args(["steady", "-n", "4", "--config"])
        .arg(config("example1.json"))
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("estimated N"), "{text}");
}

#[test]
fn simulate_writes_trajectory() {
    let dir = tempfile::tempdir().unwrap();
    let cfg: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(config("example2.json")).unwrap()).unwrap();
    let mut cfg = cfg;
    cfg["time"]["t_end"] = 0.05.into();
    cfg["time"]["k"] = 0.01.into();
    cfg["output"] = serde_json::json!({ "dir": dir.path() });
    let path = dir.path().join("short.json");
    std::fs::write(&path, cfg.to_string()).unwrap();

    let out = burgers().args(["simulate", "-n", "4", "--config"]).arg(&path).output().unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(dir.path().join("trajectory.csv")).unwrap();
    assert_eq!(csv.lines().count(), 7);
    assert!(csv.starts_with("time,l2,"));
}

#[test]
fn unknown_config_keys_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.json");
    std::fs::write(&path, r#"{"physics": {"nu": 0.1, "c0": 1.0, "typo": 3}}"#).unwrap();
    let out = burgers().args(["steady", "--config"]).arg(&path).output().unwrap();
    assert!(!out.status.success());
}
