//! End-to-end command-line tests driving the compiled `spectre` binary.

use std::path::Path;
use std::process::Command;

fn spectre() -> Command {
    Command::new(env!("CARGO_BIN_EXE_spectre"))
}

fn run_ok(cmd: &mut Command) -> String {
    let output = cmd.output().expect("binary runs");
    let stdout = String::from_utf8_lossy(&output.stdout).to_string();
    let stderr = String::from_utf8_lossy(&output.stderr).to_string();
    assert!(
        output.status.success(),
        "command failed\nstdout: {stdout}\nstderr: {stderr}"
    );
    stdout
}

#[test]
fn generate_fit_score_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let data_dir = dir.path().join("data");

    run_ok(spectre()
        .args(["generate", "--dataset", "synthetic", "--variant", "regular"])
        .args(["--rows", "600", "--seed", "7"])
        .arg("--out")
        .arg(&data_dir));
    let csv = data_dir.join("synthetic_regular_7.csv");
    assert!(csv.exists());
    assert!(data_dir.join("synthetic_regular_7.manifest.json").exists());
    let manifest = std::fs::read_to_string(data_dir.join("synthetic_regular_7.manifest.json")).unwrap();
    assert!(manifest.contains("std-0.3"), "{manifest}");

    let model = dir.path().join("detector.json");
    run_ok(spectre()
        .args(["fit", "--detector", "mahalanobis", "--seed", "3"])
        .arg("--dataset")
        .arg(&csv)
        .arg("--out")
        .arg(&model));
    assert!(model.exists());

    let scores = dir.path().join("scores.csv");
    run_ok(spectre()
        .arg("score")
        .arg("--model")
        .arg(&model)
        .arg("--dataset")
        .arg(&csv)
        .arg("--out")
        .arg(&scores));
    let text = std::fs::read_to_string(&scores).unwrap();
    // Header plus one line per row.
    assert_eq!(text.lines().count(), 601);
    assert!(text.starts_with("row,score\n"));
}

#[test]
fn generate_rejects_unknown_variant() {
    let dir = tempfile::tempdir().unwrap();
    let output = spectre()
        .args(["generate", "--dataset", "synthetic", "--variant", "bogus"])
        .arg("--out")
        .arg(dir.path())
        .output()
        .unwrap();
    assert!(!output.status.success());
    let stderr = String::from_utf8_lossy(&output.stderr);
    assert!(stderr.contains("bogus"), "{stderr}");
}

fn write_config(path: &Path, body: &str) {
    std::fs::write(path, body).unwrap();
}

#[test]
fn evaluate_and_report_emit_expected_files() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("results");
    let config = dir.path().join("exp.cfg");
    write_config(
        &config,
        &format!(
            "datasets = synthetic\ndetectors = mahalanobis, conformal\nseeds = 42\n\
             train_size = 600\ntest_size = 120\nout = {}\n",
            out.display()
        ),
    );
    run_ok(spectre().arg("evaluate").arg("--config").arg(&config));
    for file in [
        "records.jsonl",
        "manifest.json",
        "summary_auroc.csv",
        "summary_aupr.csv",
        "summary_fpr95.csv",
        "conf_err.csv",
        "auroc_synthetic.svg",
    ] {
        assert!(out.join(file).exists(), "{file} missing");
    }
    let records = std::fs::read_to_string(out.join("records.jsonl")).unwrap();
    assert_eq!(records.lines().count(), 2 * 4); // 2 detectors x 4 variants

    // Re-render the report from the records file alone.
    let report_dir = dir.path().join("report");
    run_ok(spectre()
        .arg("report")
        .arg("--records")
        .arg(out.join("records.jsonl"))
        .arg("--out")
        .arg(&report_dir));
    assert!(report_dir.join("summary_auroc.csv").exists());

    // Summary cells carry the mean±std format.
    let summary = std::fs::read_to_string(out.join("summary_auroc.csv")).unwrap();
    assert!(summary.contains('±'), "{summary}");
}

#[test]
fn evaluate_flags_partial_failures_with_exit_code_2() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("results");
    let config = dir.path().join("exp.cfg");
    write_config(
        &config,
        &format!(
            "datasets = synthetic, table:ghost\ndetectors = mahalanobis\nseeds = 42\n\
             train_size = 600\ntest_size = 120\nfeature_tables = ghost:/nonexistent\n\
             out = {}\n",
            out.display()
        ),
    );
    let output = spectre()
        .arg("evaluate")
        .arg("--config")
        .arg(&config)
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(2), "partial failure exit code");
    assert!(out.join("records.jsonl").exists());
    let manifest = std::fs::read_to_string(out.join("manifest.json")).unwrap();
    assert!(manifest.contains("ghost"), "failures recorded in manifest");
}
