use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn council(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_council")).args(args).output().expect("binary runs")
}

fn fixture(name: &str) -> String {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(name).display().to_string()
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn form_prints_partition() {
    let out = council(&["form", "--scenario", &fixture("canonical.json")]);
    assert_eq!(out.status.code(), Some(0));
    let p: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(p["clusters"][0]["council"]["heads"], serde_json::json!([1, 3, 5]));
    assert_eq!(p["clusters"][1]["council"]["heads"], serde_json::json!([6]));
}

#[test]
fn simulate_then_audit() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("m.csv");
    let dump = dir.path().join("state.json");
    let log = dir.path().join("decisions.jsonl");
    let out = council(&[
        "simulate",
        "--scenario",
        &fixture("canonical.json"),
        "--out",
        path(&csv),
        "--seed",
        "9",
        "--prime",
        "13",
        "--dump",
        path(&dump),
        "--decisions",
        path(&log),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let text = std::fs::read_to_string(&csv).unwrap();
    let mut lines = text.lines();
    assert_eq!(
        lines.next(),
        Some("round,cluster_count,mean_council,min_council,max_council,updates,reforms,hellos,secrecy_ok")
    );
    assert_eq!(lines.next(), Some("1,2,2.000,1,3,0,0,21,true"));
    assert_eq!(text.lines().count(), 11);
    assert_eq!(std::fs::read_to_string(&log).unwrap(), "");

    let out = council(&["audit", "--state", path(&dump)]);
    assert_eq!(out.status.code(), Some(0));
    let audit: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(audit["clusters"][0]["breached"], false);
}

#[test]
fn shares_round_trip() {
    let out = council(&["shares", "split", "--secret", "6", "--k", "2", "--xs", "1,2,3", "--prime", "13"]);
    assert_eq!(out.status.code(), Some(0));
    let shares: Vec<serde_json::Value> = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(shares.len(), 3);
    let two = serde_json::to_string(&shares[1..]).unwrap();
    let out = council(&["shares", "reconstruct", "--shares", &two]);
    assert_eq!(String::from_utf8(out.stdout).unwrap().trim(), "6");

    let one = serde_json::to_string(&shares[..1]).unwrap();
    let out = council(&["shares", "reconstruct", "--shares", &one]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn input_errors_exit_2() {
    assert_eq!(council(&["form", "--scenario", "/no/such/file.json"]).status.code(), Some(2));
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, r#"{"nodes": [{"nid": 1, "position": [0, 0]}, {"nid": 1, "position": [1, 0]}]}"#).unwrap();
    let out = council(&["simulate", "--scenario", path(&bad), "--out", path(&dir.path().join("x.csv"))]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("duplicate node id 1"));
    let out = council(&["simulate", "--scenario", &fixture("canonical.json"), "--out", "/tmp/x.csv", "--prime", "15"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn halted_run_exits_1() {
    let dir = tempfile::tempdir().unwrap();
    let scen = dir.path().join("split.json");
    std::fs::write(
        &scen,
        r#"{"rounds": 3, "nodes": [{"nid": 1}, {"nid": 2}], "edges": [[1, 2]],
            "link_events": [{"round": 1, "change": "down", "a": 1, "b": 2}]}"#,
    )
    .unwrap();
    let csv = dir.path().join("m.csv");
    let out = council(&["simulate", "--scenario", path(&scen), "--out", path(&csv)]);
    assert_eq!(out.status.code(), Some(1));
    // partial report: rounds up to the halt
    assert_eq!(std::fs::read_to_string(&csv).unwrap().lines().count(), 3);
}
