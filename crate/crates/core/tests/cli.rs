use std::path::Path;
use std::process::{Command, Output};

use fairalloc::instance::{parse_instance, verify_allocation, Allocation, Instance, JobSpec};
use fairalloc::rat::Rat;

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fairalloc")).args(args).output().expect("binary runs")
}

fn path(dir: &Path, name: &str) -> String {
    dir.join(name).display().to_string()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn solve_writes_a_verifiable_allocation() {
    let dir = tempfile::tempdir().unwrap();
    let inst = Instance::new(2, vec![JobSpec::new(5, [0, 1]), JobSpec::new(3, [0]), JobSpec::new(4, [1]), JobSpec::new(2, [0, 1])]).unwrap();
    std::fs::write(dir.path().join("i.json"), inst.to_json()).unwrap();

    let o = run(&["solve", "--input", &path(dir.path(), "i.json"), "--out", &path(dir.path(), "a.json"), "--report", &path(dir.path(), "r.json")]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).contains("branch = "));

    let alloc = Allocation::from_json(&std::fs::read_to_string(dir.path().join("a.json")).unwrap()).unwrap();
    let value = verify_allocation(&inst, &alloc).unwrap();
    assert_eq!(value, alloc.min_value);

    let report: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("r.json")).unwrap()).unwrap();
    let t: Rat = report["T"].as_str().unwrap().parse().unwrap();
    assert!(&value * &Rat::from_int(12) >= t);

    let o = run(&["verify", "--input", &path(dir.path(), "i.json"), "--alloc", &path(dir.path(), "a.json")]);
    assert!(o.status.success());
    assert_eq!(stdout(&o), format!("min_value = {value}\n"));
}

#[test]
fn exact_reports_the_optimum() {
    let dir = tempfile::tempdir().unwrap();
    let inst = Instance::new(2, vec![JobSpec::new(3, [0, 1]), JobSpec::new(4, [0, 1]), JobSpec::new(5, [0, 1])]).unwrap();
    std::fs::write(dir.path().join("i.json"), inst.to_json()).unwrap();
    let o = run(&["exact", "--input", &path(dir.path(), "i.json")]);
    assert!(o.status.success());
    assert_eq!(stdout(&o), "OPT = 5/1\n");
}

#[test]
fn gen_is_seeded() {
    let dir = tempfile::tempdir().unwrap();
    for name in ["x.json", "y.json"] {
        let o = run(&["gen", "--machines", "3", "--jobs", "7", "--max-size", "10", "--density", "1/2", "--seed", "11", "--out", &path(dir.path(), name)]);
        assert!(o.status.success());
    }
    let x = std::fs::read_to_string(dir.path().join("x.json")).unwrap();
    assert_eq!(x, std::fs::read_to_string(dir.path().join("y.json")).unwrap());
    let inst = parse_instance(&x).unwrap();
    assert_eq!((inst.machine_count(), inst.job_count()), (3, 7));
}

#[test]
fn tampered_min_value_fails_verification() {
    let dir = tempfile::tempdir().unwrap();
    let inst = Instance::new(1, vec![JobSpec::new(2, [0])]).unwrap();
    std::fs::write(dir.path().join("i.json"), inst.to_json()).unwrap();
    std::fs::write(dir.path().join("a.json"), r#"{"owner": {"0": 0}, "min_value": "3"}"#).unwrap();
    let o = run(&["verify", "--input", &path(dir.path(), "i.json"), "--alloc", &path(dir.path(), "a.json")]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn malformed_input_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("bad.json"), r#"{"machines": 2, "jobs": [{"size": 0, "eligible": [0]}]}"#).unwrap();
    let o = run(&["solve", "--input", &path(dir.path(), "bad.json"), "--out", &path(dir.path(), "a.json")]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("\"machines\""));

    let o = run(&["solve", "--input", &path(dir.path(), "missing.json"), "--out", &path(dir.path(), "a.json")]);
    assert_eq!(o.status.code(), Some(2));
    assert_eq!(run(&["solve"]).status.code(), Some(2));
    assert_eq!(run(&["solve", "--input", "x", "--out", "y", "--alpha", "0"]).status.code(), Some(2));
}

#[test]
fn bench_csv_has_one_row_per_instance() {
    let dir = tempfile::tempdir().unwrap();
    let suite = dir.path().join("suite");
    std::fs::create_dir(&suite).unwrap();
    for seed in 0..3 {
        let o = run(&["gen", "--machines", "2", "--jobs", "5", "--max-size", "9", "--density", "2/3", "--seed", &seed.to_string(), "--out", &path(&suite, &format!("g{seed}.json"))]);
        assert!(o.status.success());
    }
    let o = run(&["bench", "--suite", &suite.display().to_string(), "--out", &path(dir.path(), "b.csv"), "--exec", "sequential"]);
    assert!(o.status.success());
    let csv = std::fs::read_to_string(dir.path().join("b.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], fairalloc::bench::CSV_HEADER);
    assert_eq!(lines.len(), 4);
    assert!(lines[1].starts_with("g0.json,2,5,"));
}
