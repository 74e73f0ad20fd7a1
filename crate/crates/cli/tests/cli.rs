use std::fs;
use std::path::PathBuf;
use std::process::{Command, Output};

use xos_nsw::io::{read_csv, BenchRow, SolveReport};

fn bin(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_xos-nsw"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn scratch(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("xos-nsw-cli-{}-{name}", std::process::id()));
    let _ = fs::remove_dir_all(&dir);
    fs::create_dir_all(&dir).unwrap();
    dir
}

fn generate(dir: &PathBuf, file: &str, seed: &str) -> String {
    let path = dir.join(file).to_str().unwrap().to_owned();
    let out = bin(&["generate", "--kind", "k-xos-random", "--n", "3", "--m", "9", "--seed", seed, "--out", &path]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    path
}

#[test]
fn solve_reports_are_byte_identical() {
    let dir = scratch("solve");
    let inst = generate(&dir, "a.json", "7");
    let a = bin(&["solve", "--instance", &inst, "--seed", "3"]);
    let b = bin(&["solve", "--instance", &inst, "--seed", "3"]);
    assert!(a.status.success());
    assert_eq!(a.stdout, b.stdout);
    let text = String::from_utf8(a.stdout).unwrap();
    let report = SolveReport::parse(&text).unwrap();
    assert_eq!(report.seed, 3);
    assert_eq!(report.allocation.len(), 3);
}

#[test]
fn capped_welfare_suite_passes() {
    let out = bin(&["verify", "--suite", "cappedwelfare", "--n", "4"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn gadget_gap_on_small_equicovering() {
    let out = bin(&["gadget", "--n", "2", "--m", "4", "--r", "2", "--eps", "0", "--seed", "1", "--verify", "exhaustive", "--gap"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("gap 0.75"), "{text}");
}

#[test]
fn bad_usage_exits_two() {
    assert_eq!(bin(&["verify", "--suite", "nope"]).status.code(), Some(2));
    let dir = scratch("bad");
    let path = dir.join("bad.json");
    fs::write(&path, "{\"agents\": [[[1.0, -2.0]]]}").unwrap();
    let out = bin(&["solve", "--instance", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(!out.stderr.is_empty());
}

#[test]
fn bench_csv_parses() {
    let dir = scratch("bench");
    let insts = dir.join("instances");
    fs::create_dir_all(&insts).unwrap();
    generate(&insts, "a.json", "1");
    generate(&insts, "b.json", "2");
    let csv = dir.join("bench.csv");
    let out = bin(&["bench", "--dir", insts.to_str().unwrap(), "--seeds", "2", "--out", csv.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let rows: Vec<BenchRow> = read_csv(fs::File::open(&csv).unwrap()).unwrap();
    assert_eq!(rows.len(), 4);
    assert!(rows.iter().all(|r| r.ratio.map_or(true, |x| x > 0.0 && x <= 1.0 + 1e-9)));
}
