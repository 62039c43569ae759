use std::process::{Command, Output};

use lownoise::report::{parse_csv, parse_jsonl, without_timestamp};

fn lownoise(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lownoise"))
        .args(args)
        .env_remove("LOWNOISE_OUT_DIR")
        .output()
        .expect("binary runs")
}

#[test]
fn list_names_every_scenario() {
    let out = lownoise(&["list"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    for name in ["ancilla-bell", "pauli", "three-level"] {
        assert!(text.contains(name), "{text}");
    }
}

#[test]
fn run_writes_parseable_reports() {
    let dir = tempfile::tempdir().unwrap();
    let json = dir.path().join("a.jsonl");
    let out = lownoise(&["run", "ancilla-bell", "--seed", "5", "--out", json.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let (r, _) = parse_jsonl(&std::fs::read_to_string(&json).unwrap()).unwrap();
    assert_eq!(r.seed, 5);
    assert!(r.passed);

    let csv = dir.path().join("a.csv");
    let out = lownoise(&["run", "ancilla-bell", "--format", "csv", "--out", csv.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    let text = std::fs::read_to_string(&csv).unwrap();
    assert!(text.lines().any(|l| l == "section,scale,name,row,col,value"));
    assert!(!parse_csv(&text).unwrap().is_empty());
}

#[test]
fn stdout_reports_are_reproducible() {
    let args = ["run", "ancilla-bell", "--shots", "5000", "--scales", "1e-3,2e-3,4e-3,8e-3"];
    let a = lownoise(&args);
    let b = lownoise(&[&args[..], &["--workers", "3"]].concat());
    assert_eq!(a.status.code(), Some(0));
    let text = |o: &Output| without_timestamp(&String::from_utf8(o.stdout.clone()).unwrap());
    assert_eq!(text(&a), text(&b));
}

#[test]
fn out_dir_comes_from_environment() {
    let dir = tempfile::tempdir().unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_lownoise"))
        .args(["run", "pauli", "--format", "csv"])
        .env("LOWNOISE_OUT_DIR", dir.path())
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(out.stdout.is_empty());
    assert!(dir.path().join("pauli.csv").exists());
}

#[test]
fn config_files_and_overrides() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("s.toml");
    std::fs::write(&cfg, "scenario = \"three-level\"\ninput = [[1.0, 0.0], [2.0, 0.0], [1.0, 0.0]]\n").unwrap();
    let out = lownoise(&["run", "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));

    let out = lownoise(&["run", "pauli", "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn exit_codes() {
    // default three-level input leaves a first-order gap
    assert_eq!(lownoise(&["run", "three-level"]).status.code(), Some(1));
    assert_eq!(lownoise(&["run", "nope"]).status.code(), Some(2));
    assert_eq!(lownoise(&["run", "pauli", "--direction", "1,0"]).status.code(), Some(2));
    assert_eq!(lownoise(&["run", "pauli", "--scales", "1e-3,1e-4"]).status.code(), Some(2));
    assert_eq!(lownoise(&["run"]).status.code(), Some(2));
    assert_eq!(lownoise(&["run", "pauli", "--out", "/proc/nope/x.jsonl"]).status.code(), Some(2));
}

#[test]
fn random_suite_reports_each_seed() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("suite.jsonl");
    let out = lownoise(&["random-suite", "--seeds", "6", "--first", "10", "--out", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let lines: Vec<serde_json::Value> = std::fs::read_to_string(&path)
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    let seeds: Vec<u64> = lines.iter().map(|v| v["seed"].as_u64().unwrap()).collect();
    assert_eq!(seeds, (10..16).collect::<Vec<_>>());
}

#[test]
fn verify_flags_the_three_level_gap() {
    let out = lownoise(&["verify", "--seeds", "4"]);
    let text = String::from_utf8(out.stdout).unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(text.contains("ancilla-bell   pass"), "{text}");
    assert!(text.contains("pauli          pass"), "{text}");
    assert!(text.contains("three-level    FAIL (order:inverse-gap)"), "{text}");
}
