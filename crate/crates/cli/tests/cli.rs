use std::path::Path;
use std::process::{Command, Output};

fn run(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_storage-bilevel")).args(args).current_dir(dir).output().unwrap()
}

fn text(bytes: &[u8]) -> String {
    String::from_utf8_lossy(bytes).into_owned()
}

#[test]
fn parse_check_accepts_the_bundled_case() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&["parse-check"], dir.path());
    assert_eq!(out.status.code(), Some(0), "{}", text(&out.stderr));
    assert!(text(&out.stdout).contains("round trip ok"));
}

#[test]
fn unknown_technique_lists_the_valid_names() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&["solve", "--technique", "XYZ"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    let err = text(&out.stderr);
    for name in ["PD", "CS-AR", "UE-PF", "SM2"] {
        assert!(err.contains(name), "{err}");
    }
}

#[test]
fn malformed_arguments_are_usage_errors() {
    let dir = tempfile::tempdir().unwrap();
    for args in [
        vec!["solve", "--storage", "1,2"],
        vec!["solve", "--technique", "SM1", "--eps", "-1"],
        vec!["solve", "--case", "missing.m"],
        vec!["frobnicate"],
    ] {
        let out = run(&args, dir.path());
        assert_eq!(out.status.code(), Some(2), "{args:?}: {}", text(&out.stderr));
    }
    assert_eq!(run(&["--help"], dir.path()).status.code(), Some(0));
}

#[test]
fn solve_writes_both_reports() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(
        &[
            "solve",
            "--model",
            "dc",
            "--technique",
            "SM2",
            "--eps",
            "1e-3",
            "--starts",
            "2",
            "--outer-iters",
            "2",
            "--out",
            "run",
        ],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(0), "{}", text(&out.stderr));
    let json: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("run.json")).unwrap()).unwrap();
    assert_eq!(json.as_array().map(Vec::len), Some(2));
    let csv = std::fs::read_to_string(dir.path().join("run.csv")).unwrap();
    assert_eq!(csv.lines().count(), 3);
    assert!(csv.starts_with("technique,"));
}

#[test]
fn compare_reads_a_technique_list() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("list.txt"), "PD\nSM1 eps=1e-3\n").unwrap();
    let out = run(&["compare", "--model", "dc", "--list", "list.txt", "--starts", "2", "--out", "cmp"], dir.path());
    assert_eq!(out.status.code(), Some(0), "{}", text(&out.stderr));
    let csv = std::fs::read_to_string(dir.path().join("cmp.csv")).unwrap();
    assert_eq!(csv.lines().count(), 3);
    assert!(csv.lines().nth(2).unwrap().starts_with("SM1"));
}
