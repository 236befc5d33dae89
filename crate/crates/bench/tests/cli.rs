use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use ccpo_bench::config::CHAIN_PRESET;

fn ccpo(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ccpo"))
        .args(args)
        .env("CCPO_LOG_LEVEL", "error")
        .output()
        .expect("spawn ccpo")
}

fn write_config(dir: &Path, text: &str) -> String {
    let path = dir.join("cfg.toml");
    fs::write(&path, text).unwrap();
    path.display().to_string()
}

#[test]
fn missing_gamma_exits_with_config_code() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &CHAIN_PRESET.replace("gamma = 0.9\n", ""));
    let out = ccpo(&["run", "--config", &cfg]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("gamma"));
}

#[test]
fn unknown_key_and_unknown_suite_are_config_errors() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &format!("{CHAIN_PRESET}\n[extra]\nknob = 1\n"));
    let out = ccpo(&["run", "--config", &cfg]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("extra.knob"));
    assert_eq!(ccpo(&["verify", "nope"]).status.code(), Some(2));
}

#[test]
fn run_writes_per_seed_and_merged_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), CHAIN_PRESET);
    let out_dir = dir.path().join("out");
    let out = ccpo(&[
        "run",
        "--config",
        &cfg,
        "--seed",
        "2",
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    for f in [
        "metrics.csv",
        "summary.csv",
        "iterations.jsonl",
        "metrics_seed2.csv",
        "iterations_seed2.jsonl",
        "config.toml",
    ] {
        assert!(out_dir.join(f).exists(), "{f}");
    }
    let metrics = fs::read_to_string(out_dir.join("metrics.csv")).unwrap();
    assert_eq!(metrics.lines().count(), 1 + 13);
    assert!(metrics.lines().skip(1).all(|l| l.starts_with("chain,2,")));
    let log = fs::read_to_string(out_dir.join("iterations.jsonl")).unwrap();
    for line in log.lines() {
        let v: serde_json::Value = serde_json::from_str(line).unwrap();
        assert_eq!(v["seed"], 2);
    }
    let echoed = fs::read_to_string(out_dir.join("config.toml")).unwrap();
    assert!(echoed.contains("seeds = [2]"), "{echoed}");
}

#[test]
fn oracle_algorithm_writes_frontier() {
    let dir = tempfile::tempdir().unwrap();
    let text = CHAIN_PRESET.replace("algorithm = \"ccpo\"", "algorithm = \"oracle\"");
    let cfg = write_config(dir.path(), &text);
    let out_dir = dir.path().join("out");
    let out = ccpo(&[
        "run",
        "--config",
        &cfg,
        "--seed",
        "0",
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let frontier = fs::read_to_string(out_dir.join("frontier.csv")).unwrap();
    let mut lines = frontier.lines();
    assert_eq!(lines.next(), Some("epsilon,feasible,v_r,v_c"));
    let rows: Vec<Vec<f64>> = lines
        .map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            vec![
                f[0].parse().unwrap(),
                f[2].parse().unwrap(),
                f[3].parse().unwrap(),
            ]
        })
        .collect();
    assert_eq!(rows.len(), 13);
    assert!(rows.windows(2).all(|w| w[1][1] >= w[0][1] - 1e-9));
    assert!(rows.iter().all(|r| r[2] <= r[0] + 1e-6));
}

#[test]
fn oracle_compare_on_chain() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), CHAIN_PRESET);
    let out_dir = dir.path().join("cmp");
    let out = ccpo(&[
        "oracle-compare",
        "--config",
        &cfg,
        "--seed",
        "1",
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let text = fs::read_to_string(out_dir.join("oracle_compare.csv")).unwrap();
    assert!(
        text.starts_with("seed,epsilon,feasible,v_r_policy,v_c_policy,v_r_lp,v_c_lp,reward_gap\n")
    );
    assert_eq!(text.lines().count(), 1 + 13);
}

#[test]
fn oracle_compare_rejects_continuous_task() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), ccpo_bench::config::CIRCLE_PRESET);
    assert_eq!(
        ccpo(&["oracle-compare", "--config", &cfg]).status.code(),
        Some(2)
    );
}

#[test]
fn bounds_prints_sorted_csv() {
    let out = ccpo(&["bounds", "--degrees", "1,0", "--n-max", "8"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("p,N,leverage,B,beta"));
    let first: Vec<&str> = lines.next().unwrap().split(',').collect();
    assert_eq!(&first[..3], ["0", "1", "1"]);
    assert_eq!(text.lines().count(), 1 + 8 + 7);
}

#[test]
fn verify_emits_json_lines() {
    let out = ccpo(&["verify", "coverage"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    let v: serde_json::Value = serde_json::from_str(text.lines().next().unwrap()).unwrap();
    assert_eq!(v["suite"], "coverage");
    assert_eq!(v["pass"], true);
}
