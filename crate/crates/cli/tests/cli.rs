use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn ferment(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ferment")).args(args).output().expect("binary runs")
}

fn write_config(dir: &Path, body: &str) -> String {
    let path = dir.join("config.json");
    fs::write(&path, body).unwrap();
    path.to_string_lossy().into_owned()
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn selfcheck_exits_zero() {
    let out = ferment(&["selfcheck"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stdout));
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.lines().count() >= 7 && !text.contains("FAIL"));
}

#[test]
fn unknown_key_fails_with_line() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "{\n  \"graph\": {\"family\": \"karate\"},\n  \"modle\": {}\n}\n");
    let out = ferment(&["solve-tf", "--config", &cfg, "--out", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("line 3") && err.contains("modle"), "{err}");
}

#[test]
fn solve_tf_writes_stamped_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        r#"{"graph": {"family": "karate"},
            "problem": {"type": "tf", "horizon": 30, "t0": 10},
            "selection": {"methods": ["degree"], "m": [5]}}"#,
    );
    let out = ferment(&["solve-tf", "--config", &cfg, "--out", dir.path().to_str().unwrap(), "--seed", "7"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let s = read_json(&dir.path().join("summary.json"));
    assert_eq!(s["seed"], 7);
    assert_eq!(s["config_sha256"].as_str().unwrap().len(), 64);
    assert_eq!(s["status"], "optimal");
    assert!(s["cost"].as_f64().unwrap() > 0.0);
    assert!(s["stationarity_residual"].as_f64().unwrap() <= 1e-6);
    let x = fs::read_to_string(dir.path().join("tf_x.csv")).unwrap();
    assert!(x.starts_with("# config_sha256="));
    assert_eq!(x.lines().filter(|l| !l.starts_with('#')).count(), 1 + 31);
}

#[test]
fn unreachable_cover_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let edges = dir.path().join("pairs.txt");
    fs::write(&edges, "n 4\n0 1 0.4\n2 3 0.4\n").unwrap();
    let cfg = write_config(
        dir.path(),
        &format!(
            r#"{{"graph": {{"family": "edge-file", "edge_file": {:?}}},
                 "selection": {{"methods": ["greedy"], "m": [1]}}}}"#,
            edges
        ),
    );
    let out = ferment(&["select-nodes", "--config", &cfg, "--out", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(dir.path().join("selection.json").exists());
}

#[test]
fn zero_budget_keeps_free_record() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        r#"{"graph": {"family": "karate"},
            "model": {"x0": 2.0},
            "problem": {"type": "mf", "horizon": 20, "a": 0.5, "budget": [0.0]},
            "selection": {"methods": ["degree"], "m": [3]}}"#,
    );
    let out = ferment(&["solve-mf", "--config", &cfg, "--out", dir.path().to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let s = read_json(&dir.path().join("summary.json"));
    let run = &s["runs"][0];
    assert_eq!(run["expenditure"], 0.0);
    assert!(run["lambda_y_T"].is_null());
    let u = fs::read_to_string(dir.path().join("mf_C0_u.csv")).unwrap();
    assert!(u.lines().skip(2).all(|l| l.split(',').skip(1).all(|v| v.parse::<f64>().unwrap() == 0.0)));
}

#[test]
fn experiment_table_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let body = r#"{"graph": {"family": "erdos-renyi", "n": 12, "param": 0.4},
        "problem": {"type": "tf", "horizon": 20, "t0": 5},
        "selection": {"methods": ["greedy", "degree"], "m": [2, 4]},
        "ensemble": {"realizations": 3, "base_seed": 40, "parallel_workers": 2}}"#;
    let cfg = write_config(dir.path(), body);
    let run = |sub: &str, workers: &str| {
        let out_dir = dir.path().join(sub);
        let out = ferment(&["experiment", "--config", &cfg, "--out", out_dir.to_str().unwrap(), "--workers", workers]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        out_dir
    };
    let a = run("a", "2");
    let b = run("b", "2");
    let table = fs::read_to_string(a.join("table.csv")).unwrap();
    assert_eq!(table, fs::read_to_string(b.join("table.csv")).unwrap());
    let rows: Vec<&str> = table.lines().filter(|l| !l.starts_with('#')).collect();
    assert_eq!(rows.len(), 3);
    assert_eq!(rows[0], "method\\m,2,4");
    assert!(rows[1].starts_with("greedy,") && rows[1].contains('±'));
    let s = read_json(&a.join("summary.json"));
    assert_eq!(s["seeds"], serde_json::json!([40, 41, 42]));
    assert_eq!(s["records"].as_array().unwrap().len(), 3 * 2 * 2);
    assert!(fs::read_dir(a.join("runs")).unwrap().count() > 0);
}
