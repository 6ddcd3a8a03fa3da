use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn ctxalloc(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ctxalloc")).args(args).output().expect("spawn ctxalloc")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn run_prints_converged_allocation() {
    let o = ctxalloc(&["run", "--builtin", "table1", "--rate", "600"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let out = stdout(&o);
    assert!(out.starts_with("converged in "), "{out}");
    assert!(out.contains("A7"));
    assert!(out.contains("0.0449"), "price missing: {out}");
}

#[test]
fn run_csv_lists_every_user() {
    let o = ctxalloc(&["run", "--builtin", "table1", "--rate", "600", "--format", "csv"]);
    assert_eq!(o.status.code(), Some(0));
    let out = stdout(&o);
    let mut lines = out.lines();
    assert_eq!(lines.next(), Some("id,cell,sector,rate,bid,price"));
    assert_eq!(lines.count(), 54);
}

#[test]
fn invalid_input_exits_1() {
    let o = ctxalloc(&["run", "--builtin", "table1", "--rate", "-5"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("--rate"), "{}", stderr(&o));

    let o = ctxalloc(&["run", "--builtin", "nope", "--rate", "600"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("table1-unbalanced"));

    let o = ctxalloc(&["run", "--rate", "600"]);
    assert_eq!(o.status.code(), Some(1), "missing source must be an input error");

    let dir = tempfile::tempdir().unwrap();
    let o = ctxalloc(&["sweep", "--builtin", "table1", "--sweep", "100:50:10", "--out", path(dir.path())]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn round_limit_exits_2() {
    let o = ctxalloc(&["run", "--builtin", "table1", "--rate", "600", "--max-iter", "1"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("converge"));
}

#[test]
fn sweep_writes_tables() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("sweep");
    let o = ctxalloc(&["sweep", "--builtin", "table1", "--sweep", "600:800:100", "--out", path(&out), "--oracle"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    for name in ["sector.csv", "rates_sector_1.csv", "rates_sector_2.csv", "rates_sector_3.csv", "oracle_diff.csv"] {
        assert!(out.join(name).is_file(), "{name} missing");
    }
    let sector = fs::read_to_string(out.join("sector.csv")).unwrap();
    assert!(sector.starts_with("R,R1,R2,R3,p1,p2,p3,iterations\n"), "{sector}");
    assert_eq!(sector.lines().count(), 4);
    let rates = fs::read_to_string(out.join("rates_sector_2.csv")).unwrap();
    assert!(rates.lines().next().unwrap().starts_with("R,A7,A8,A9,A10"));
}

#[test]
fn sweep_is_identical_across_worker_counts() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for (out, workers) in [(&a, "1"), (&b, "8")] {
        let o = ctxalloc(&["sweep", "--builtin", "table1", "--sweep", "500:700:100", "--out", path(out), "--workers", workers]);
        assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    }
    for name in ["sector.csv", "rates_sector_1.csv", "rates_sector_2.csv", "rates_sector_3.csv"] {
        assert_eq!(fs::read(a.join(name)).unwrap(), fs::read(b.join(name)).unwrap(), "{name}");
    }
}

#[test]
fn emitted_scenario_reproduces_builtin() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("t1.json");
    let o = ctxalloc(&["scenario", "--builtin", "table1", "--out", path(&file)]);
    assert_eq!(o.status.code(), Some(0));
    let from_file = ctxalloc(&["run", "--scenario", path(&file), "--rate", "600", "--format", "csv"]);
    let builtin = ctxalloc(&["run", "--builtin", "table1", "--rate", "600", "--format", "csv"]);
    assert_eq!(from_file.status.code(), Some(0));
    assert_eq!(stdout(&from_file), stdout(&builtin));
}

#[test]
fn unbalanced_builtin_has_45_users() {
    let o = ctxalloc(&["scenario", "--builtin", "table1-unbalanced"]);
    assert_eq!(o.status.code(), Some(0));
    let doc: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(doc["users"].as_array().unwrap().len(), 45);
}

#[test]
fn override_of_file_value_warns() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("t1.json");
    ctxalloc(&["scenario", "--builtin", "table1", "--out", path(&file)]);
    let o = ctxalloc(&["run", "--scenario", path(&file), "--rate", "600", "--delta", "0.01"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stderr(&o).contains("warning: --delta"), "{}", stderr(&o));
}

#[test]
fn trace_is_json_lines() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("trace.jsonl");
    let o = ctxalloc(&["run", "--builtin", "table1", "--rate", "600", "--trace", path(&file)]);
    assert_eq!(o.status.code(), Some(0));
    let text = fs::read_to_string(&file).unwrap();
    let last: serde_json::Value = serde_json::from_str(text.lines().last().unwrap()).unwrap();
    assert_eq!(last["variant"], "Stop");
    for line in text.lines() {
        let v: serde_json::Value = serde_json::from_str(line).unwrap();
        assert!(v["round"].is_u64() && v["sender"].is_string() && v["receiver"].is_string());
    }
}

#[test]
fn oracle_check_passes_at_converged_point() {
    let o = ctxalloc(&["oracle-check", "--builtin", "table1", "--rate", "600"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(stdout(&o).lines().nth(1).unwrap().ends_with(",true"));
}
