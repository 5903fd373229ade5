use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn mcomm(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mcomm"))
        .args(args)
        .output()
        .expect("running mcomm")
}

fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn write(dir: &Path, name: &str, contents: &str) -> String {
    let path = dir.join(name);
    fs::write(&path, contents).unwrap();
    path.to_str().unwrap().to_string()
}

#[test]
fn metropolis_output_feeds_wave() {
    let dir = tempfile::tempdir().unwrap();
    let potential = write(
        dir.path(),
        "u.json",
        r#"{"N": 2, "values": [0.0, 0.0, 0.0]}"#,
    );
    let out = mcomm(&["metropolis", "--potential", &potential, "--variant", "mu"]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let kernel = write(dir.path(), "p.json", &stdout(&out));

    let csv = dir.path().join("grid.csv");
    let out = mcomm(&[
        "wave",
        "--kernel",
        &kernel,
        "--source",
        "row:0,1,0",
        "--unnormalized",
        "--emit",
        csv.to_str().unwrap(),
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let summary: Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(summary["n"], 3);
    assert!(summary["triangle_min"].as_f64().unwrap() < 0.0);

    let grid = fs::read_to_string(&csv).unwrap();
    let mut lines = grid.lines();
    assert_eq!(lines.next(), Some("x,y,k"));
    let k11 = grid
        .lines()
        .find(|l| l.starts_with("1,1,"))
        .and_then(|l| l.rsplit(',').next())
        .map(|v| v.parse::<f64>().unwrap())
        .unwrap();
    assert!((k11 + 1.0).abs() < 1e-12);
    assert_eq!(grid.lines().count(), 1 + 9);
}

#[test]
fn hypergroup_reports_end_points() {
    let dir = tempfile::tempdir().unwrap();
    let potential = write(
        dir.path(),
        "u.json",
        r#"{"N": 4, "values": [4.0, 1.0, 0.0, 1.0, 4.0]}"#,
    );
    let out = mcomm(&["metropolis", "--potential", &potential]);
    let kernel = write(dir.path(), "p.json", &stdout(&out));
    let out = mcomm(&["hypergroup", "--kernel", &kernel]);
    assert!(out.status.success());
    let report: Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(report["hset"], serde_json::json!([0, 4]));
}

#[test]
fn symmetry_and_quotient_of_a_cycle() {
    let dir = tempfile::tempdir().unwrap();
    let kernel = write(
        dir.path(),
        "c.json",
        r#"{"n": 4, "rows": [[0,0.5,0,0.5],[0.5,0,0.5,0],[0,0.5,0,0.5],[0.5,0,0.5,0]]}"#,
    );
    let out = mcomm(&["symmetry", "--kernel", &kernel]);
    let report: Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(report["size"], 8);
    assert_eq!(report["closed"], true);

    let group = write(dir.path(), "g.json", r#"[[0,3,2,1]]"#);
    let out = mcomm(&["quotient", "--kernel", &kernel, "--group", &group]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let q: Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(q["projection"], serde_json::json!([0, 1, 2, 1]));
}

#[test]
fn bad_inputs_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let not_stochastic = write(
        dir.path(),
        "bad.json",
        r#"{"n": 2, "rows": [[0.5, 0.6], [0.5, 0.5]]}"#,
    );
    assert_eq!(
        mcomm(&["analyze", "--kernel", &not_stochastic])
            .status
            .code(),
        Some(2)
    );
    assert_eq!(
        mcomm(&["analyze", "--kernel", "/nonexistent/p.json"])
            .status
            .code(),
        Some(2)
    );
    assert_eq!(mcomm(&["reproduce", "no-such-case"]).status.code(), Some(2));
    assert_eq!(mcomm(&["search", "--n", "1"]).status.code(), Some(2));
}

#[test]
fn reproduce_micro_example() {
    let out = mcomm(&["reproduce", "remark-finale-c"]);
    assert_eq!(out.status.code(), Some(0));
    let report: Value = serde_json::from_str(stdout(&out).trim()).unwrap();
    assert_eq!(report["passed"], true);
}

fn search_lines(args: &[&str]) -> Vec<Value> {
    let out = mcomm(args);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    stdout(&out)
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect()
}

#[test]
fn search_is_deterministic_across_thread_counts() {
    let base = [
        "search", "--n", "4", "--trials", "20", "--asym", "--seed", "9",
    ];
    let one = search_lines(&[&base[..], &["--threads", "1"]].concat());
    let four = search_lines(&[&base[..], &["--threads", "4"]].concat());
    assert_eq!(one, four);
    assert_eq!(one.len(), 21);
    for (i, line) in one[..20].iter().enumerate() {
        assert_eq!(line["trial"], i);
    }
    assert_eq!(one[20]["summary"]["trials"], 20);
}

#[test]
fn symmetric_family_never_fails() {
    let lines = search_lines(&[
        "search",
        "--n",
        "6",
        "--variant",
        "mu",
        "--family",
        "symmetric",
        "--trials",
        "30",
    ]);
    let summary = &lines.last().unwrap()["summary"];
    assert_eq!(summary["fails"], 0);
    assert_eq!(summary["errors"], 0);
}

#[test]
fn zero_trials_emit_only_the_summary() {
    let lines = search_lines(&["search", "--n", "4", "--trials", "0"]);
    assert_eq!(lines.len(), 1);
    assert_eq!(lines[0]["summary"]["trials"], 0);
}
