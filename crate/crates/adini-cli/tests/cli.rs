//! End-to-end tests of the `adini` binary: output formats, file I/O,
//! exit codes, and byte-determinism of the CSV output.

use std::fs;
use std::process::{Command, Output};

fn adini() -> Command {
    Command::new(env!("CARGO_BIN_EXE_adini"))
}

fn run(args: &[&str]) -> Output {
    adini().args(args).output().expect("binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

#[test]
fn help_lists_the_subcommands() {
    let out = run(&["--help"]);
    assert_eq!(code(&out), 0);
    let text = stdout(&out);
    for cmd in ["solve", "convergence", "verify"] {
        assert!(text.contains(cmd), "--help should mention {cmd}:\n{text}");
    }
}

#[test]
fn verify_prints_a_pass_line_per_check() {
    let out = run(&["verify", "--trials", "2", "--seed", "1"]);
    assert_eq!(code(&out), 0, "stderr: {}", stderr(&out));
    let text = stdout(&out);
    for d in 1..=3 {
        assert!(
            text.contains(&format!("nodal unisolvence and duality d={d}")),
            "missing duality line for d={d}:\n{text}"
        );
        assert!(
            text.contains(&format!("interpolation-error Hessian identity d={d}")),
            "missing Hessian identity line for d={d}:\n{text}"
        );
    }
    assert!(text.lines().all(|l| l.starts_with("[PASS]")), "{text}");
}

#[test]
fn verify_runs_the_residual_identity_check() {
    let out = run(&["verify", "--d", "2", "--trials", "1", "--residual-identity"]);
    assert_eq!(code(&out), 0, "stderr: {}", stderr(&out));
    assert!(
        stdout(&out).contains("[PASS] residual decomposition d=2"),
        "{}",
        stdout(&out)
    );
}

#[test]
fn solve_reports_mesh_size_error_norms_and_solver_stats() {
    let out = run(&["solve", "--d", "2", "--n", "2", "--u", "u2"]);
    assert_eq!(code(&out), 0, "stderr: {}", stderr(&out));
    let text = stdout(&out);
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 3, "{text}");
    assert!(lines[0].starts_with("d=2 cells=[2, 2] dofs="), "{text}");
    let l2: f64 = lines[1]
        .split_whitespace()
        .find_map(|t| t.strip_prefix("l2="))
        .expect("l2 field")
        .parse()
        .expect("l2 value");
    assert!(l2.is_finite() && l2 > 0.0 && l2 < 0.1, "l2 = {l2}");
    assert!(lines[2].starts_with("cg_iters="), "{text}");
}

#[test]
fn solve_reads_a_mesh_from_a_breakpoint_file() {
    let dir = tempfile::tempdir().expect("tempdir");
    let path = dir.path().join("mesh.txt");
    fs::write(&path, "dim 2\n0 0.5 1\n0 0.25 1\n").expect("write mesh");
    let out = run(&["solve", "--mesh-file", path.to_str().unwrap()]);
    assert_eq!(code(&out), 0, "stderr: {}", stderr(&out));
    assert!(
        stdout(&out).starts_with("d=2 cells=[2, 2]"),
        "{}",
        stdout(&out)
    );
}

#[test]
fn solve_accepts_a_polynomial_file_as_manufactured_solution() {
    let dir = tempfile::tempdir().expect("tempdir");
    let path = dir.path().join("poly.txt");
    fs::write(&path, "# u = x^2 y^2\n1 2 2\n").expect("write polynomial");
    let out = run(&["solve", "--d", "2", "--n", "2", "--u", path.to_str().unwrap()]);
    assert_eq!(code(&out), 0, "stderr: {}", stderr(&out));
}

#[test]
fn dimension_mismatch_between_solution_and_mesh_is_a_config_error() {
    let dir = tempfile::tempdir().expect("tempdir");
    let path = dir.path().join("poly1d.txt");
    fs::write(&path, "1 2\n").expect("write polynomial");
    let out = run(&["solve", "--d", "2", "--n", "2", "--u", path.to_str().unwrap()]);
    assert_eq!(code(&out), 2, "stderr: {}", stderr(&out));
    assert!(stderr(&out).contains("dimension"), "{}", stderr(&out));
}

#[test]
fn unsupported_dimension_is_a_config_error() {
    let out = run(&["solve", "--d", "4", "--n", "2"]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("dimension"), "{}", stderr(&out));
    let out = run(&["verify", "--d", "0"]);
    assert_eq!(code(&out), 2);
}

#[test]
fn missing_mesh_file_is_a_config_error() {
    let out = run(&["solve", "--mesh-file", "/no/such/mesh.txt"]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("cannot read"), "{}", stderr(&out));
}

#[test]
fn violated_order_assertion_exits_with_check_failure() {
    let out = run(&[
        "convergence",
        "--d",
        "1",
        "--ns",
        "2,4",
        "--assert-orders",
        "h2:9.0:10.0",
    ]);
    assert_eq!(code(&out), 3, "stderr: {}", stderr(&out));
    assert!(stderr(&out).contains("[FAIL]"), "{}", stderr(&out));

    let out = run(&[
        "convergence",
        "--d",
        "1",
        "--ns",
        "2,4",
        "--assert-orders",
        "h2:0.5:4.0",
    ]);
    assert_eq!(code(&out), 0, "stderr: {}", stderr(&out));
    assert!(stderr(&out).contains("[PASS]"), "{}", stderr(&out));
}

#[test]
fn malformed_order_assertion_is_a_config_error() {
    let out = run(&[
        "convergence",
        "--d",
        "1",
        "--ns",
        "2,4",
        "--assert-orders",
        "h3:1:2",
    ]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("unknown norm"), "{}", stderr(&out));
}

#[test]
fn exhausted_solver_budget_exits_with_solver_failure() {
    let out = run(&[
        "solve", "--d", "2", "--n", "4", "--maxit", "1", "--tol", "1e-14",
    ]);
    assert_eq!(code(&out), 4, "stderr: {}", stderr(&out));
    assert!(stderr(&out).starts_with("error:"), "{}", stderr(&out));
}

#[test]
fn convergence_writes_the_study_as_csv_on_stdout() {
    let out = run(&["convergence", "--d", "1", "--ns", "2,4"]);
    assert_eq!(code(&out), 0, "stderr: {}", stderr(&out));
    let text = stdout(&out);
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 3, "{text}");
    assert_eq!(
        lines[0],
        "d,N,h,dofs,l2_err,h1_err,h2_err,l2_order,h1_order,h2_order,cg_iters,seconds"
    );
    for record in &lines[1..] {
        assert_eq!(record.split(',').count(), 12, "{record}");
    }
}

#[test]
fn csv_output_is_deterministic_except_for_timings() {
    let dir = tempfile::tempdir().expect("tempdir");
    let args = |path: &str| {
        vec![
            "convergence".to_string(),
            "--d".into(),
            "2".into(),
            "--ns".into(),
            "2,4".into(),
            "--jitter".into(),
            "0.2".into(),
            "--seed".into(),
            "7".into(),
            "--out".into(),
            path.to_string(),
        ]
    };
    let p1 = dir.path().join("a.csv");
    let p2 = dir.path().join("b.csv");
    for (path, threads) in [(&p1, "1"), (&p2, "4")] {
        let out = adini()
            .args(["--threads", threads])
            .args(args(path.to_str().unwrap()))
            .output()
            .expect("binary runs");
        assert_eq!(code(&out), 0, "stderr: {}", stderr(&out));
    }
    let strip_timing = |src: String| -> String {
        src.lines()
            .map(|l| l.rsplit_once(',').expect("timing column").0.to_string())
            .collect::<Vec<_>>()
            .join("\n")
    };
    let a = strip_timing(fs::read_to_string(&p1).expect("csv a"));
    let b = strip_timing(fs::read_to_string(&p2).expect("csv b"));
    assert_eq!(a, b, "CSV differs beyond the timing column");
}

#[test]
fn dump_matrix_writes_coordinate_text() {
    let dir = tempfile::tempdir().expect("tempdir");
    let path = dir.path().join("stiffness.txt");
    let out = run(&[
        "solve",
        "--d",
        "1",
        "--n",
        "4",
        "--dump-matrix",
        path.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "stderr: {}", stderr(&out));
    let text = fs::read_to_string(&path).expect("matrix file");
    let mut lines = text.lines();
    let header: Vec<usize> = lines
        .next()
        .expect("header")
        .split_whitespace()
        .map(|t| t.parse().expect("header numbers"))
        .collect();
    let [n, nnz] = header.as_slice() else {
        panic!("header should be `n nnz`: {text}");
    };
    assert_eq!(*n, 6, "free DOFs of the d=1, N=4 clamped mesh");
    let entries: Vec<Vec<&str>> = lines.map(|l| l.split_whitespace().collect()).collect();
    assert_eq!(entries.len(), *nnz);
    for e in &entries {
        assert_eq!(e.len(), 3, "{e:?}");
        let i: usize = e[0].parse().expect("row");
        let j: usize = e[1].parse().expect("col");
        assert!(i <= j && j < *n, "upper triangle, 0-based: {e:?}");
        let v: f64 = e[2].parse().expect("value");
        assert!(v.is_finite());
    }
}

#[test]
fn solve_appends_a_csv_record_with_the_out_flag() {
    let dir = tempfile::tempdir().expect("tempdir");
    let path = dir.path().join("run.csv");
    let out = run(&[
        "solve",
        "--d",
        "1",
        "--n",
        "4",
        "--out",
        path.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "stderr: {}", stderr(&out));
    let text = fs::read_to_string(&path).expect("csv");
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 2, "{text}");
    assert!(lines[1].starts_with("1,4,"), "{text}");
}
