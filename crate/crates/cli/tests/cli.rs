use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn sme_gemm(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sme-gemm")).args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

/// Report JSON with the timing field removed.
fn report_without_wall(path: &Path) -> Value {
    let mut v: Value = serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap();
    v["report"].as_object_mut().unwrap().remove("wall_seconds");
    v
}

#[test]
fn runs_workloads_and_writes_reports() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let o = sme_gemm(&["--workload", "1,2", "--dtype", "f32,i8", "--out", out]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).matches("2 runs, 0 failed").count() == 2, "{}", stdout(&o));
    for f in ["id1-f32.json", "id2-i8.json", "summary.json"] {
        assert!(dir.path().join(f).exists(), "{f} missing");
    }
}

#[test]
fn unknown_workload_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = sme_gemm(&["--workload", "99", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("unknown workload"));
}

#[test]
fn bad_flag_value_is_an_error() {
    let o = sme_gemm(&["--dtype", "f128"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn explain_prints_plan() {
    let o = sme_gemm(&["--explain", "--dtype", "f32"]);
    assert_eq!(o.status.code(), Some(0));
    let s = stdout(&o);
    assert!(s.contains("mr=16 nr=64"), "{s}");
    assert!(s.contains("mc=176 nc=64 kc=6656"), "{s}");
}

#[test]
fn dump_packed_writes_blocks() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let dump = dir.path().join("pk");
    let o = sme_gemm(&["--workload", "3", "--dump-packed", dump.to_str().unwrap(), "--out", out]);
    assert_eq!(o.status.code(), Some(0));
    for f in ["a.pkbf", "b.pkbf"] {
        let p = dump.join("f32").join(f);
        assert!(std::fs::metadata(&p).map(|m| m.len() > 0).unwrap_or(false), "{} missing", p.display());
    }
}

#[test]
fn same_seed_gives_identical_reports() {
    let dirs = [tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap()];
    for d in &dirs {
        let o = sme_gemm(&["--workload", "5", "--units", "4", "--queue-seed", "9", "--seed", "3", "--out", d.path().to_str().unwrap()]);
        assert_eq!(o.status.code(), Some(0));
    }
    let [a, b] = dirs.map(|d| report_without_wall(&d.path().join("id5-f32.json")));
    assert_eq!(a, b);
}
