mod common;

use std::process::{Command, Output};
use std::time::{Duration, Instant};

use common::data_path;
use serde_json::Value;

fn qrobust(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_qrobust"))
        .args(args)
        .env_remove("QROBUST_TIMEOUT")
        .output()
        .expect("binary runs")
}

fn json(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).unwrap_or_else(|e| panic!("{e}: {}", String::from_utf8_lossy(&out.stdout)))
}

fn field<'a>(text: &'a str, key: &str) -> &'a str {
    text.lines()
        .find_map(|l| l.strip_prefix(key).map(str::trim))
        .unwrap_or_else(|| panic!("no `{key}` in\n{text}"))
}

#[test]
fn solve_figure_instance() {
    let fig = data_path("fig.cnf");
    let out = qrobust(&["solve", &fig, "--mode", "exact", "--format", "json"]);
    assert_eq!(out.status.code(), Some(0));
    let v = json(&out);
    assert_eq!(v["lower"], "2");
    assert_eq!(v["upper"], "2");
    assert_eq!(v["chance_bits"], 2);
    assert_eq!(v["witness"]["1"], true);

    let text = qrobust(&["solve", &fig, "--mode", "exact"]);
    let text = String::from_utf8(text.stdout).unwrap();
    assert_eq!(field(&text, "lower"), "2");
    assert_eq!(field(&text, "upper"), "2");
    assert_eq!(field(&text, "ratio"), "[0.5000000000, 0.5000000000]");
}

#[test]
fn text_and_json_agree() {
    let path = data_path("corpus/window.mbv");
    for mode in [["--mode", "exact"], ["--mode", "relax"]] {
        let v = json(&qrobust(&["solve", &path, mode[0], mode[1], "--relax-count", "3", "--format", "json"]));
        let text = String::from_utf8(qrobust(&["solve", &path, mode[0], mode[1], "--relax-count", "3"]).stdout).unwrap();
        assert_eq!(field(&text, "lower"), v["lower"].as_str().unwrap());
        assert_eq!(field(&text, "upper"), v["upper"].as_str().unwrap());
        assert_eq!(field(&text, "algorithm"), v["algorithm"].as_str().unwrap());
        let inputs = v["inputs"].as_object().unwrap();
        assert_eq!(field(&text, "witness"), format!("base={}", inputs["base"]));
    }
}

#[test]
fn relaxing_nothing_is_exact() {
    let path = data_path("corpus/rand3_30.cnf");
    let v = json(&qrobust(&["solve", &path, "--mode", "relax", "--relax-count", "0", "--format", "json"]));
    assert_eq!(v["lower"], v["upper"]);
    let exact = json(&qrobust(&["solve", &path, "--format", "json"]));
    assert_eq!(v["lower"], exact["lower"]);
}

#[test]
fn input_errors_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.cnf");
    std::fs::write(&bad, "p cnf 2 1\nc p choice 3 0\n1 2 0\n").unwrap();
    let out = qrobust(&["solve", bad.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("out of range"));
    assert_eq!(qrobust(&["solve", "/nonexistent.cnf"]).status.code(), Some(1));
    assert_eq!(qrobust(&["solve", &data_path("merge.qimp")]).status.code(), Some(1));
    assert_eq!(qrobust(&["solve", &data_path("fig.cnf"), "--mode", "fast"]).status.code(), Some(1));

    let prog = dir.path().join("bad.qimp");
    std::fs::write(&prog, "input a 4 controlled;\nif (b == a) target;\n").unwrap();
    let out = qrobust(&["qrse", prog.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("undeclared"));
}

#[test]
fn timeout_yields_partial_result_on_time() {
    let start = Instant::now();
    let out = qrobust(&["solve", &data_path("prog2.mbv"), "--timeout", "2", "--format", "json"]);
    let wall = start.elapsed();
    assert_eq!(out.status.code(), Some(2));
    let v = json(&out);
    assert_eq!(v["status"], "partial");
    assert_eq!(v["lower"], "0");
    assert_eq!(v["upper"], "4294967296");
    assert!(wall < Duration::from_millis(2200 + 500), "{wall:?}");

    let out = Command::new(env!("CARGO_BIN_EXE_qrobust"))
        .args(["solve", &data_path("prog2.mbv"), "--format", "json"])
        .env("QROBUST_TIMEOUT", "1")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn qrse_exit_codes() {
    let merge = data_path("merge.qimp");
    let out = qrobust(&["qrse", &merge, "--threshold", "1/2", "--format", "json"]);
    assert_eq!(out.status.code(), Some(0));
    let v = json(&out);
    assert_eq!(v["verdict"], "found");
    assert_eq!(v["chi"]["lower"], "1/2");

    assert_eq!(qrobust(&["qrse", &merge, "--threshold", "1"]).status.code(), Some(3));
    let out = qrobust(&["qrse", &merge, "--threshold", "1", "--merge", "--format", "json"]);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(json(&out)["chi"]["lower"], "1");

    let out = qrobust(&["qrse", &data_path("prog1.qimp"), "--threshold", "1/5", "--format", "json"]);
    assert_eq!(out.status.code(), Some(3));
    assert_eq!(json(&out)["chi"]["upper"], "1/4294967296");

    let out = qrobust(&["qrse", &data_path("prog2.qimp"), "--threshold", "0.2", "--timeout", "1"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn portfolio_recovers_from_a_failing_first_stage() {
    let out = qrobust(&[
        "qrse",
        &data_path("prog2.qimp"),
        "--threshold",
        "1/5",
        "--portfolio",
        "bfs:8,bfs:40",
        "--timeout",
        "20",
        "--format",
        "json",
    ]);
    assert_eq!(out.status.code(), Some(0));
    let v = json(&out);
    assert_eq!(v["chi"]["witness"]["command"].as_u64().map(|c| c <= 1), Some(true));
}

#[test]
fn bench_rows_follow_the_schema() {
    let out = qrobust(&["bench", &data_path("corpus"), "--configs", "exact,bfs:8", "--timeout", "30"]);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("instance,mode,r,order,lower,upper,imprecision,wall_ms,status"));
    let rows: Vec<Vec<&str>> = lines.map(|l| l.split(',').collect()).collect();
    assert_eq!(rows.len(), 20);
    let mut names: Vec<&str> = rows.iter().map(|r| r[0]).collect();
    assert!(names.windows(2).all(|w| w[0] <= w[1]));
    names.dedup();
    assert_eq!(names.len(), 10);
    for r in &rows {
        assert_eq!(r.len(), 9);
        assert_eq!(r[8], "complete", "{r:?}");
        let imprecision: f64 = r[6].parse().unwrap();
        match r[1] {
            "exact" => assert_eq!(imprecision, 1.0),
            "relax" => assert!(imprecision <= 256.0),
            other => panic!("mode {other}"),
        }
    }
}
