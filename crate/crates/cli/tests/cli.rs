//! Binary-level tests: exit codes, file outputs, CSV format.

use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

fn bench_cli(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_bench-cli"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn gen_small(dir: &Path, task: &str, extra: &[&str]) -> Output {
    let mut args = vec![
        "gen",
        "--task",
        task,
        "--cells",
        "50",
        "--evals",
        "2000",
        "--seed",
        "3",
        "--out",
        dir.to_str().unwrap(),
    ];
    args.extend_from_slice(extra);
    bench_cli(&args)
}

#[test]
fn unknown_flag_prints_usage_to_stderr_and_exits_1() {
    let out = bench_cli(&["run", "--definitely-not-a-flag"]);
    assert_eq!(out.status.code(), Some(1));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("Usage") || stderr.contains("usage"), "{stderr}");
}

#[test]
fn missing_repertoire_dir_exits_1() {
    let out = bench_cli(&[
        "run",
        "--task",
        "mobile",
        "--repertoires",
        "/nonexistent/dir",
        "--situation",
        "identity",
        "--goal",
        "1.0,0.0",
    ]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn unknown_task_mode_and_situation_exit_1() {
    let tmp = TempDir::new().unwrap();
    let out = gen_small(tmp.path(), "hovercraft", &[]);
    assert_eq!(out.status.code(), Some(1));

    gen_small(tmp.path(), "mobile", &["--situations", "identity"]);
    let base = [
        "run",
        "--task",
        "mobile",
        "--repertoires",
        tmp.path().to_str().unwrap(),
        "--goal",
        "0.5,0.0",
    ];
    let mut args = base.to_vec();
    args.extend(["--situation", "identity", "--mode", "warp-drive"]);
    assert_eq!(bench_cli(&args).status.code(), Some(1));

    let mut args = base.to_vec();
    args.extend(["--situation", "not-a-situation"]);
    assert_eq!(bench_cli(&args).status.code(), Some(1));
}

#[test]
fn gen_writes_the_full_library() {
    let tmp = TempDir::new().unwrap();
    let out = gen_small(tmp.path(), "mobile", &[]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let count = std::fs::read_dir(tmp.path())
        .unwrap()
        .filter(|e| {
            e.as_ref()
                .unwrap()
                .path()
                .extension()
                .is_some_and(|x| x == "rpt")
        })
        .count();
    assert_eq!(count, 15, "mobile library is 3 frictions x 5 damages");

    let tmp2 = TempDir::new().unwrap();
    let out = gen_small(tmp2.path(), "pusher", &[]);
    assert_eq!(out.status.code(), Some(0));
    let count = std::fs::read_dir(tmp2.path()).unwrap().count();
    assert_eq!(count, 7, "pusher library is 7 objects");
}

#[test]
fn run_and_log_round_trip() {
    let tmp = TempDir::new().unwrap();
    gen_small(tmp.path(), "mobile", &["--situations", "identity"]);
    let log = tmp.path().join("steps.jsonl");
    let out = bench_cli(&[
        "run",
        "--task",
        "mobile",
        "--repertoires",
        tmp.path().to_str().unwrap(),
        "--situation",
        "identity",
        "--mode",
        "cp-l",
        "--goal",
        "0.6,0.0",
        "--seed",
        "2",
        "--log",
        log.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("success=true"), "{stdout}");

    let text = std::fs::read_to_string(&log).unwrap();
    assert!(!text.is_empty());
    for line in text.lines() {
        let v: serde_json::Value = serde_json::from_str(line).unwrap();
        assert!(v.get("repertoire").is_some());
        assert!(v.get("repertoire_probs").is_some());
    }
}

#[test]
fn bench_writes_csv_with_contract_header() {
    let tmp = TempDir::new().unwrap();
    gen_small(
        tmp.path(),
        "mobile",
        &["--situations", "identity,fric0.6_ok"],
    );
    let csv = tmp.path().join("out.csv");
    let out = bench_cli(&[
        "bench",
        "--task",
        "mobile",
        "--repertoires",
        tmp.path().to_str().unwrap(),
        "--situations",
        "fric0.6_ok",
        "--modes",
        "cp-l,sp-nl",
        "--replicates",
        "2",
        "--goal",
        "0.6,0.0",
        "--seed",
        "5",
        "--out",
        csv.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let text = std::fs::read_to_string(&csv).unwrap();
    let mut lines = text.lines();
    assert_eq!(
        lines.next().unwrap(),
        "situation,mode,replicate,steps,success"
    );
    assert_eq!(lines.count(), 2 * 2);

    // stats consumes the CSV it just wrote
    let out = bench_cli(&[
        "stats",
        "--csv",
        csv.to_str().unwrap(),
        "--mode-a",
        "cp-l",
        "--mode-b",
        "sp-nl",
    ]);
    assert_eq!(out.status.code(), Some(0));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("p_two_sided="), "{stdout}");
}
