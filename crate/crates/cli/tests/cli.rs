use std::path::Path;
use std::process::{Command, Output};

fn rotsync(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rotsync"))
        .current_dir(dir)
        .args(args)
        .output()
        .unwrap()
}

fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn field(text: &str, key: &str) -> f64 {
    text.lines()
        .find_map(|l| l.strip_prefix(key).map(|v| v.trim().parse().unwrap()))
        .unwrap_or_else(|| panic!("no `{key}` in {text}"))
}

#[test]
fn noiseless_round_trip_through_files() {
    let dir = tempfile::tempdir().unwrap();
    let synth = rotsync(
        dir.path(),
        &[
            "synth", "--model", "uniform", "--q", "0", "--sigma", "0", "--n", "20", "--p", "1", "--seed", "7",
        ],
    );
    assert!(synth.status.success(), "{synth:?}");
    let solve = rotsync(dir.path(), &["solve", "--solver", "mpls"]);
    assert!(solve.status.success(), "{solve:?}");
    let eval = rotsync(dir.path(), &["eval"]);
    assert!(eval.status.success(), "{eval:?}");
    assert!(field(&stdout(&eval), "mean_err_deg") < 1e-8);
}

#[test]
fn solve_output_is_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    assert!(rotsync(
        d,
        &["synth", "--n", "40", "--p", "0.4", "--q", "0.3", "--sigma", "0.05", "--seed", "3"]
    )
    .status
    .success());
    for solver in ["mpls", "irls-gm", "irls-l12", "cemp-mst"] {
        assert!(
            rotsync(d, &["solve", "--solver", solver, "--seed", "5", "--out", "a.txt"])
                .status
                .success()
        );
        assert!(
            rotsync(d, &["solve", "--solver", solver, "--seed", "5", "--out", "b.txt"])
                .status
                .success()
        );
        let (a, b) = (
            std::fs::read(d.join("a.txt")).unwrap(),
            std::fs::read(d.join("b.txt")).unwrap(),
        );
        assert_eq!(a, b, "{solver}");
    }
}

#[test]
fn solve_reports_errors_against_truth() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    assert!(rotsync(
        d,
        &["synth", "--n", "30", "--p", "0.5", "--q", "0.2", "--sigma", "0", "--seed", "1"]
    )
    .status
    .success());
    let out = rotsync(d, &["solve", "--truth", "truth.txt"]);
    assert!(out.status.success());
    let text = stdout(&out);
    assert!(text.contains("solver mpls"));
    assert!(field(&text, "mean_err_deg") < 1e-3);
}

#[test]
fn bench_writes_identical_csv() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let args = |out: &'static str| {
        vec![
            "bench",
            "--n",
            "30",
            "--p",
            "0.5",
            "--q",
            "0.1:0.2:0.5",
            "--sigma",
            "0,0.1",
            "--seeds",
            "2",
            "--out",
            out,
        ]
    };
    assert!(rotsync(d, &args("a.csv")).status.success());
    assert!(rotsync(d, &args("b.csv")).status.success());
    let a = std::fs::read_to_string(d.join("a.csv")).unwrap();
    assert_eq!(a, std::fs::read_to_string(d.join("b.csv")).unwrap());
    // 4 solvers × 3 q × 2 σ × (2 seeds + avg) + header.
    assert_eq!(a.lines().count(), 4 * 3 * 2 * 3 + 1);
    assert!(a.starts_with("solver,model,n,p,q,sigma,seed,"));
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    assert_eq!(rotsync(d, &["frobnicate"]).status.code(), Some(2));
    assert_eq!(rotsync(d, &["bench", "--q", "0:1"]).status.code(), Some(2));
    assert_eq!(rotsync(d, &["solve", "--solver", "svd"]).status.code(), Some(2));
    // Missing input file is a runtime failure.
    assert_eq!(rotsync(d, &["solve"]).status.code(), Some(1));
    assert_eq!(rotsync(d, &["bench", "--q", "1.5", "--n", "10"]).status.code(), Some(1));
}

#[test]
fn malformed_file_names_the_line() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    std::fs::write(
        d.join("graph.txt"),
        "rotsync-graph v1 n=3 m=2\n0 1 1 0 0 0 1 0 0 0 1\n1 2 1 0 0 0 1 0 0 0 -1\n",
    )
    .unwrap();
    let out = rotsync(d, &["solve"]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8(out.stderr).unwrap();
    assert!(err.contains("graph.txt: line 3"), "{err}");
}

#[test]
fn bench_failures_exit_nonzero_with_nan_rows() {
    let dir = tempfile::tempdir().unwrap();
    let out = rotsync(
        dir.path(),
        &[
            "bench",
            "--n",
            "5",
            "--p",
            "0",
            "--q",
            "0.1",
            "--seeds",
            "1",
            "--solvers",
            "mpls",
        ],
    );
    assert_eq!(out.status.code(), Some(1));
    assert!(stdout(&out).contains("NaN"));
}
