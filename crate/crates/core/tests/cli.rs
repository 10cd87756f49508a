use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn graphot(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_graphot"))
        .current_dir(dir)
        .args(args)
        .output()
        .unwrap()
}

fn stdout_json(out: &Output) -> Value {
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).unwrap()
}

fn counterexample_files(dir: &Path) {
    std::fs::write(dir.join("a.json"), r#"{"h":[1,1],"F":[[0.5],[0.5]],"C":[[[0],[0]],[[0],[0]]]}"#).unwrap();
    std::fs::write(dir.join("b.json"), r#"{"h":[1,1],"F":[[1],[0]],"C":[[[0],[0]],[[0],[0]]]}"#).unwrap();
    std::fs::write(dir.join("t.json"), "[[0.5,0.5],[0.5,0.5]]").unwrap();
}

#[test]
fn loss_reports_counterexample_values() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    counterexample_files(d);
    let base = ["loss", "--a", "a.json", "--b", "b.json", "--weights", "unit"];
    let with_plan = |kind: &str| {
        let mut args = base.to_vec();
        args.extend(["--plan", "file", "--plan-file", "t.json", "--loss", kind]);
        stdout_json(&graphot(d, &args))["value"].as_f64().unwrap()
    };
    assert!((with_plan("ot") - 0.5).abs() < 1e-12);
    assert!(with_plan("pigvae").abs() < 1e-12);
    let exhaustive = stdout_json(&graphot(d, &base));
    assert!((exhaustive["value"].as_f64().unwrap() - 0.5).abs() < 1e-12);
    assert_eq!(exhaustive["permutation"], serde_json::json!([0, 1]));
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    counterexample_files(d);
    assert_eq!(graphot(d, &["no-such-command"]).status.code(), Some(2));
    assert_eq!(
        graphot(d, &["loss", "--a", "a.json", "--b", "b.json", "--plan", "file"]).status.code(),
        Some(2)
    );
    assert_eq!(
        graphot(d, &["loss", "--a", "a.json", "--b", "b.json", "--plan", "fw", "--ground", "l1"]).status.code(),
        Some(2)
    );
    assert_eq!(graphot(d, &["loss", "--a", "missing.json", "--b", "b.json"]).status.code(), Some(3));
}

#[test]
fn generated_graphs_round_trip_through_editdist() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let out = graphot(d, &["gen", "--seed", "2", "--count", "3", "--n-min", "4", "--n-max", "6"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 3);
    std::fs::write(d.join("a.json"), lines[0]).unwrap();
    let same = stdout_json(&graphot(d, &["editdist", "--a", "a.json", "--b", "a.json", "--exact"]));
    assert_eq!(same["distance"], 0);

    graphot(d, &["gen", "--seed", "2", "--count", "3", "--out", "data.jsonl"]);
    assert_eq!(std::fs::read_to_string(d.join("data.jsonl")).unwrap().lines().count(), 3);
}

#[test]
fn bench_emits_one_row_per_solver() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let out = graphot(d, &["gen", "--seed", "1", "--count", "6", "--n-min", "4", "--n-max", "6", "--out", "data.jsonl"]);
    assert!(out.status.success());
    let out = graphot(
        d,
        &["bench", "--data", "data.jsonl", "--pairs", "3", "--solvers", "exhaustive,random,matcher"],
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8(out.stdout).unwrap();
    let rows: Vec<&str> = text.lines().collect();
    assert_eq!(rows[0], "solver,mean_distance,std_distance,mean_seconds,std_seconds,pairs");
    assert_eq!(rows.len(), 4);
    assert!(rows[3].starts_with("matcher,N.A."));
}
