use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn towerlab(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_towerlab"))
        .current_dir(dir)
        .env_remove("TOWERLAB_OUT")
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn nicify_writes_the_copylen_table() {
    let dir = tempfile::tempdir().unwrap();
    let out = towerlab(
        dir.path(),
        &["nicify", "--alpha", "w*2", "--out", "seg.json"],
    );
    assert_eq!(code(&out), 0);
    let seg = read_json(&dir.path().join("seg.json"));
    assert_eq!(seg["top"], "w*2");
    let copylen = |base: &str| {
        seg["nodes"]
            .as_array()
            .unwrap()
            .iter()
            .find(|n| n["base"] == base)
            .unwrap()["copylen"]
            .clone()
    };
    assert_eq!(copylen("w*2"), 0);
    assert_eq!(copylen("w"), 0);
    assert_eq!(copylen("3"), 3);
    assert_eq!(copylen("w+2"), 2);
}

#[test]
fn copylen_prints_a_single_value() {
    let dir = tempfile::tempdir().unwrap();
    let out = towerlab(dir.path(), &["copylen", "--alpha", "w*2", "--beta", "3"]);
    assert_eq!(code(&out), 0);
    assert_eq!(String::from_utf8_lossy(&out.stdout).trim(), "3");
}

#[test]
fn built_tower_verifies() {
    let dir = tempfile::tempdir().unwrap();
    let build = towerlab(
        dir.path(),
        &[
            "tower",
            "build",
            "--alpha",
            "2",
            "--seed",
            "full-binary",
            "--depth",
            "6",
            "--stages",
            "300",
            "--out",
            "tw",
        ],
    );
    assert_eq!(
        code(&build),
        0,
        "{}",
        String::from_utf8_lossy(&build.stdout)
    );
    let verify = towerlab(dir.path(), &["tower", "verify", "tw"]);
    assert_eq!(
        code(&verify),
        0,
        "{}",
        String::from_utf8_lossy(&verify.stdout)
    );
    assert_eq!(
        read_json(&dir.path().join("tw/verify.json"))["failures"],
        serde_json::json!([])
    );
}

#[test]
fn tampered_map_fails_largeness_with_a_witness() {
    let dir = tempfile::tempdir().unwrap();
    let build = towerlab(
        dir.path(),
        &[
            "tower",
            "build",
            "--alpha",
            "1",
            "--seed",
            "two-path",
            "--depth",
            "10",
            "--variant",
            "small",
            "--targets",
            "0",
            "--oracle",
            "mock",
            "--stages",
            "600",
            "--out",
            "sm",
        ],
    );
    assert_eq!(
        code(&build),
        0,
        "{}",
        String::from_utf8_lossy(&build.stdout)
    );

    let map_path = dir.path().join("sm/level-000.map.json");
    let mut map = read_json(&map_path);
    let entry = map["final_map"]
        .as_array_mut()
        .unwrap()
        .iter_mut()
        .find(|e| e[0].as_array().unwrap().len() == 2)
        .unwrap();
    let img = entry[1].as_array_mut().unwrap();
    img.reverse();
    std::fs::write(&map_path, serde_json::to_string(&map).unwrap()).unwrap();

    let verify = towerlab(dir.path(), &["tower", "verify", "sm"]);
    assert_eq!(code(&verify), 1);
    let report = read_json(&dir.path().join("sm/verify.json"));
    let check = report["checks"]
        .as_array()
        .unwrap()
        .iter()
        .find(|c| c["name"].as_str().unwrap().ends_with("Largeness"))
        .unwrap();
    assert_eq!(check["pass"], false);
    assert!(check["witnesses"][0]
        .as_str()
        .unwrap()
        .contains("decreases"));
}

#[test]
fn tiny_probe_budget_is_undecided() {
    let dir = tempfile::tempdir().unwrap();
    let out = towerlab(
        dir.path(),
        &[
            "xi", "--alpha", "2", "--beta", "1", "--oracle", "mock", "--probe", "1",
        ],
    );
    assert_eq!(code(&out), 2);
}

#[test]
fn bad_input_exits_three() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(
        code(&towerlab(
            dir.path(),
            &["copylen", "--alpha", "w**", "--beta", "3"]
        )),
        3
    );
    assert_eq!(
        code(&towerlab(
            dir.path(),
            &["copylen", "--alpha", "w", "--beta", "w+1"]
        )),
        3
    );
    assert_eq!(
        code(&towerlab(dir.path(), &["tower", "verify", "missing"])),
        3
    );
}
