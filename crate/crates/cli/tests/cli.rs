//! End-to-end tests of the `detcal` binary: spawn the real executable and
//! check stdout, exit codes, and written files.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use detcal_core::io::{read_calibration_report, read_eval_summary};

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("tests/fixtures")
        .join(name)
}

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_detcal"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).expect("utf-8 stdout")
}

fn stderr(out: &Output) -> String {
    String::from_utf8(out.stderr.clone()).expect("utf-8 stderr")
}

#[test]
fn evaluate_worked_example_prints_dece_and_writes_report() {
    let dir = tempfile::tempdir().unwrap();
    let out_path = dir.path().join("report.json");
    let out = run(&[
        "evaluate",
        "--gt",
        fixture("worked_example_gt.json").to_str().unwrap(),
        "--dets",
        fixture("worked_example_dets.json").to_str().unwrap(),
        "--bins",
        "2",
        "--out",
        out_path.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "stderr: {}", stderr(&out));
    let text = stdout(&out);
    assert!(text.contains("D-ECE 0.275000"), "stdout: {text}");
    assert!(text.contains("samples 4"), "stdout: {text}");
    let report = read_calibration_report(&out_path).unwrap();
    assert!((report.metric_value - 0.275).abs() < 1e-12);
    assert_eq!(report.total_samples, 4);
}

#[test]
fn evaluate_perfect_detector_reports_zero() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&[
        "evaluate",
        "--gt",
        fixture("perfect_gt.json").to_str().unwrap(),
        "--dets",
        fixture("perfect_dets.json").to_str().unwrap(),
        "--out",
        dir.path().join("report.json").to_str().unwrap(),
    ]);
    assert!(out.status.success());
    assert!(stdout(&out).contains("D-ECE 0.000000"));
}

#[test]
fn evaluate_missing_file_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&[
        "evaluate",
        "--gt",
        "/nonexistent/gt.json",
        "--dets",
        fixture("perfect_dets.json").to_str().unwrap(),
        "--out",
        dir.path().join("report.json").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("/nonexistent/gt.json"));
}

#[test]
fn evaluate_malformed_json_exits_2_with_path() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, "{ not json").unwrap();
    let out = run(&[
        "evaluate",
        "--gt",
        bad.to_str().unwrap(),
        "--dets",
        fixture("perfect_dets.json").to_str().unwrap(),
        "--out",
        dir.path().join("report.json").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("bad.json"));
}

#[test]
fn evaluate_rejects_zero_bins() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&[
        "evaluate",
        "--gt",
        fixture("worked_example_gt.json").to_str().unwrap(),
        "--dets",
        fixture("worked_example_dets.json").to_str().unwrap(),
        "--bins",
        "0",
        "--out",
        dir.path().join("report.json").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn reliability_matches_golden_csv() {
    let dir = tempfile::tempdir().unwrap();
    let out_path = dir.path().join("rel.csv");
    let out = run(&[
        "reliability",
        "--gt",
        fixture("worked_example_gt.json").to_str().unwrap(),
        "--dets",
        fixture("worked_example_dets.json").to_str().unwrap(),
        "--bins",
        "2",
        "--out",
        out_path.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "stderr: {}", stderr(&out));
    let written = std::fs::read(&out_path).unwrap();
    let golden = std::fs::read(fixture("worked_example_reliability.csv")).unwrap();
    assert_eq!(written, golden);
}

#[test]
fn reliability_empty_dets_writes_one_row_per_bin() {
    let dir = tempfile::tempdir().unwrap();
    let out_path = dir.path().join("rel.csv");
    let out = run(&[
        "reliability",
        "--gt",
        fixture("worked_example_gt.json").to_str().unwrap(),
        "--dets",
        fixture("empty_dets.json").to_str().unwrap(),
        "--bins",
        "10",
        "--out",
        out_path.to_str().unwrap(),
    ]);
    assert!(out.status.success());
    let text = std::fs::read_to_string(&out_path).unwrap();
    let rows: Vec<&str> = text.lines().skip(1).collect();
    assert_eq!(rows.len(), 10);
    for row in rows {
        let fields: Vec<&str> = row.split(',').collect();
        assert_eq!(fields[2], "0", "empty bin count: {row}");
    }
}

#[test]
fn reliability_single_bin_gap_equals_dece() {
    let dir = tempfile::tempdir().unwrap();
    let out_path = dir.path().join("rel.csv");
    let out = run(&[
        "reliability",
        "--gt",
        fixture("worked_example_gt.json").to_str().unwrap(),
        "--dets",
        fixture("worked_example_dets.json").to_str().unwrap(),
        "--bins",
        "1",
        "--out",
        out_path.to_str().unwrap(),
    ]);
    assert!(out.status.success());
    // One bin: conf (0.9+0.8+0.4+0.2)/4 = 0.575, prec 0.5, so the single
    // gap is -0.075 and D-ECE is its absolute value.
    assert!(stdout(&out).contains("D-ECE 0.075000"));
    let text = std::fs::read_to_string(&out_path).unwrap();
    let rows: Vec<&str> = text.lines().skip(1).collect();
    assert_eq!(rows.len(), 1);
    assert!(rows[0].ends_with("-0.075000"), "row: {}", rows[0]);
}

#[test]
fn loss_pair_prints_counts_ratio_and_loss() {
    let out = run(&[
        "loss",
        "--matched-csv",
        fixture("matched_pair.csv").to_str().unwrap(),
    ]);
    assert!(out.status.success());
    let text = stdout(&out);
    assert!(text.contains("hard ac 1 an 0 ic 1 in 0"), "stdout: {text}");
    assert!(text.contains("pc_ratio 0.500000"), "stdout: {text}");
    assert!(text.contains("L_BPC 0.187316"), "stdout: {text}");
}

#[test]
fn loss_all_confident_correct_is_zero() {
    let out = run(&[
        "loss",
        "--matched-csv",
        fixture("matched_ones.csv").to_str().unwrap(),
    ]);
    assert!(out.status.success());
    assert!(stdout(&out).contains("L_BPC 0.000000"));
}

#[test]
fn loss_empty_csv_reports_degenerate_and_exits_0() {
    let out = run(&[
        "loss",
        "--matched-csv",
        fixture("matched_empty.csv").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0));
    assert!(stdout(&out).contains("pc_ratio degenerate"));
}

fn demo_args<'a>(mode: &'a str, epochs: &'a str, dir: &'a str) -> Vec<&'a str> {
    vec![
        "train-demo",
        mode,
        "--epochs",
        epochs,
        "--out-dir",
        dir,
    ]
}

#[test]
fn train_demo_writes_summaries_and_curve() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("demo");
    let out = run(&demo_args("--baseline", "2", out_dir.to_str().unwrap()));
    assert!(out.status.success(), "stderr: {}", stderr(&out));
    let text = stdout(&out);
    assert!(text.contains("domain D-ECE mAP@0.5"), "stdout: {text}");
    assert!(text.lines().any(|l| l.starts_with("in ")));
    assert!(text.lines().any(|l| l.starts_with("out ")));
    let summary_in = read_eval_summary(&out_dir.join("eval_in.json")).unwrap();
    let summary_out = read_eval_summary(&out_dir.join("eval_out.json")).unwrap();
    assert_eq!(summary_in.domain.to_string(), "in");
    assert_eq!(summary_out.domain.to_string(), "out");
    let curve = std::fs::read_to_string(out_dir.join("training_curve.csv")).unwrap();
    assert_eq!(curve.lines().count(), 3, "header plus one row per epoch");
}

#[test]
fn train_demo_repeated_runs_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    let out_a = run(&demo_args("--with-bpc", "2", a.to_str().unwrap()));
    let out_b = run(&demo_args("--with-bpc", "2", b.to_str().unwrap()));
    assert!(out_a.status.success() && out_b.status.success());
    assert_eq!(out_a.stdout, out_b.stdout);
    for name in ["eval_in.json", "eval_out.json", "training_curve.csv"] {
        let bytes_a = std::fs::read(a.join(name)).unwrap();
        let bytes_b = std::fs::read(b.join(name)).unwrap();
        assert_eq!(bytes_a, bytes_b, "{name} differs between runs");
    }
}

#[test]
fn train_demo_epochs_zero_evaluates_initialized_model() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("demo");
    let out = run(&demo_args("--baseline", "0", out_dir.to_str().unwrap()));
    assert!(out.status.success());
    let curve = std::fs::read_to_string(out_dir.join("training_curve.csv")).unwrap();
    assert_eq!(curve.lines().count(), 1, "header only");
    assert!(read_eval_summary(&out_dir.join("eval_in.json")).is_ok());
}

#[test]
fn train_demo_requires_exactly_one_mode() {
    let dir = tempfile::tempdir().unwrap();
    let neither = run(&[
        "train-demo",
        "--epochs",
        "1",
        "--out-dir",
        dir.path().join("x").to_str().unwrap(),
    ]);
    assert_eq!(neither.status.code(), Some(2));
    let both = run(&[
        "train-demo",
        "--baseline",
        "--with-bpc",
        "--epochs",
        "1",
        "--out-dir",
        dir.path().join("y").to_str().unwrap(),
    ]);
    assert_eq!(both.status.code(), Some(2));
}
