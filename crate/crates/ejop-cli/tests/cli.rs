//! End-to-end runs of the `ejop` binary.

use std::fs;
use std::path::Path;
use std::process::Command;

fn ejop() -> Command {
    Command::new(env!("CARGO_BIN_EXE_ejop"))
}

fn write_toy_csv(path: &Path) {
    // Two separable classes along the first feature.
    let mut out = String::new();
    for i in 0..120 {
        let class = i % 2;
        let x0 = class as f64 * 5.0 + (i as f64 * 0.37).sin() * 0.4;
        let x1 = (i as f64 * 0.73).cos() * 0.4;
        out.push_str(&format!("{x0},{x1},{class}\n"));
    }
    fs::write(path, out).unwrap();
}

#[test]
fn print_config_round_trips_through_parse() {
    let out = ejop()
        .args(["print-config", "experiment"])
        .output()
        .unwrap();
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("h_grid"));
}

#[test]
fn experiment_on_csv_writes_reports() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("toy.csv");
    write_toy_csv(&csv);
    let out_dir = dir.path().join("out");
    let output = ejop()
        .args([
            "experiment",
            "--set",
            &format!("dataset_path={}", csv.display()),
            "--set",
            "metrics=euclidean,ejop",
            "--set",
            "classifiers=knn",
            "--set",
            "train=60",
            "--set",
            "val=30",
            "--set",
            "test=30",
            "--set",
            "h_grid=2.0",
            "--set",
            "t_grid=0.5",
            "--set",
            "gate_mode=min-support:2",
            "--set",
            "runs=2",
            "--set",
            &format!("output_dir={}", out_dir.display()),
        ])
        .output()
        .unwrap();
    assert!(
        output.status.success(),
        "stderr: {}",
        String::from_utf8_lossy(&output.stderr)
    );
    let stdout = String::from_utf8_lossy(&output.stdout);
    assert!(stdout.contains("euclidean"), "table missing rows: {stdout}");
    assert!(out_dir.join("report.csv").is_file());
    assert!(out_dir.join("runs.csv").is_file());
    let report = fs::read_to_string(out_dir.join("report.csv")).unwrap();
    assert!(report.starts_with("dataset,metric,classifier"));
}

#[test]
fn estimate_exports_loadable_metric() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("toy.csv");
    write_toy_csv(&csv);
    let out_dir = dir.path().join("metrics");
    let output = ejop()
        .args([
            "estimate",
            "--set",
            &format!("dataset_path={}", csv.display()),
            // Bandwidth wide enough that balls straddle both clusters;
            // inside one pure-label cluster the estimate is constant and
            // the outer product would be identically zero.
            "--set",
            "h_grid=6.0",
            "--set",
            "t_grid=0.5",
            "--set",
            "gate_mode=min-support:2",
            "--set",
            &format!("output_dir={}", out_dir.display()),
        ])
        .output()
        .unwrap();
    assert!(
        output.status.success(),
        "stderr: {}",
        String::from_utf8_lossy(&output.stderr)
    );
    let matrix = ejop::harness::io::load_ejop_matrix(&out_dir.join("toy.gop")).unwrap();
    assert_eq!(matrix.dim(), 2);
    let transform =
        ejop::harness::io::load_transform(&out_dir.join("toy.transform")).unwrap();
    assert_eq!(transform.dim(), 2);
    // The separable direction should dominate the spectrum.
    assert!(transform.eigvals()[0] > 0.0);
}

#[test]
fn recover_writes_csv() {
    let dir = tempfile::tempdir().unwrap();
    let output = ejop()
        .args([
            "recover",
            "--set",
            "n_grid=300",
            "--set",
            "seeds=0,1",
            "--set",
            "oracle_samples=5000",
            "--set",
            &format!("output_dir={}", dir.path().display()),
        ])
        .output()
        .unwrap();
    assert!(
        output.status.success(),
        "stderr: {}",
        String::from_utf8_lossy(&output.stderr)
    );
    let csv = fs::read_to_string(dir.path().join("recovery.csv")).unwrap();
    assert!(csv.starts_with("n,seed,h,t,spectral_error,sin_theta,max_bottom_eigval"));
    assert_eq!(csv.lines().count(), 3);
}

#[test]
fn proptest_report_passes() {
    let output = ejop()
        .args(["proptest-report", "--trials", "50"])
        .output()
        .unwrap();
    assert!(output.status.success());
    let stdout = String::from_utf8_lossy(&output.stdout);
    assert!(stdout.contains("held 50/50"));
}

#[test]
fn classify_prints_single_run_table() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("toy.csv");
    write_toy_csv(&csv);
    let output = ejop()
        .args([
            "classify",
            "--set",
            &format!("dataset_path={}", csv.display()),
            "--set",
            "metrics=euclidean",
            "--set",
            "classifiers=knn",
            "--set",
            "train=60",
            "--set",
            "val=30",
            "--set",
            "test=30",
            "--set",
            "runs=5",
        ])
        .output()
        .unwrap();
    assert!(
        output.status.success(),
        "stderr: {}",
        String::from_utf8_lossy(&output.stderr)
    );
    let stdout = String::from_utf8_lossy(&output.stdout);
    // classify overrides runs to a single evaluation
    assert!(stdout.contains("euclidean"));
}
