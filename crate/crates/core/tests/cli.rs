use std::fs;
use std::process::Command;

fn wavecache() -> Command {
    Command::new(env!("CARGO_BIN_EXE_wavecache"))
}

#[test]
fn run_verifies_and_writes_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let dump = dir.path().join("mem.txt");
    let log = dir.path().join("events.jsonl");
    let out = wavecache()
        .args(["run", "--kernel", "MATRIX-DEP", "--n", "6", "--mode", "twc", "--window", "3", "--verify"])
        .arg("--dump-memory")
        .arg(&dump)
        .arg("--event-log")
        .arg(&log)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let metrics: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!(metrics["total_cycles"].as_u64().unwrap() > 0);
    assert!(fs::read_to_string(&dump).unwrap().lines().count() > 0);
    let first = fs::read_to_string(&log).unwrap().lines().next().map(str::to_owned).unwrap();
    assert!(serde_json::from_str::<serde_json::Value>(&first).unwrap()["cycle"].is_u64());
}

#[test]
fn sweep_writes_report() {
    let dir = tempfile::tempdir().unwrap();
    let out = wavecache()
        .args(["sweep", "--kernel", "MATRIX", "--n", "4", "--windows", "2,inf", "--out"])
        .arg(dir.path())
        .output()
        .unwrap();
    assert!(out.status.success());
    let csv = String::from_utf8(out.stdout).unwrap();
    assert_eq!(csv.lines().count(), 5);
    assert_eq!(fs::read_to_string(dir.path().join("sweep.csv")).unwrap(), csv);
    assert!(dir.path().join("speedup.dat").exists());
}

#[test]
fn config_file_and_bad_input() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    fs::write(&cfg, "kernel = \"VECTOR-FULL-DEP\"\nmode = \"decoupled\"\nverify = true\n[params]\nvector_len = 12\n").unwrap();
    let out = wavecache().args(["run", "--config"]).arg(&cfg).output().unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));

    let bad = wavecache().args(["run", "--kernel", "NOPE"]).output().unwrap();
    assert!(!bad.status.success());
    let zero = wavecache().args(["run", "--mode", "twc", "--window", "0"]).output().unwrap();
    assert!(!zero.status.success());
}
