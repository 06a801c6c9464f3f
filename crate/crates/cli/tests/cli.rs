//! End-to-end checks of the `lcsm` binary: generate data, train, verify
//! equivalences, and exercise the failure paths.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn lcsm(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lcsm"))
        .args(args)
        .current_dir(cwd)
        .output()
        .expect("binary runs")
}

fn stdout(output: &Output) -> String {
    String::from_utf8_lossy(&output.stdout).to_string()
}

fn stderr(output: &Output) -> String {
    String::from_utf8_lossy(&output.stderr).to_string()
}

/// Strip the wall_ms column (index 6) from a metrics CSV.
fn strip_wall(text: &str) -> Vec<String> {
    text.lines()
        .map(|line| {
            let cols: Vec<&str> = line.split(',').collect();
            if cols.len() == 8 {
                let mut kept = cols[..6].to_vec();
                kept.push(cols[7]);
                kept.join(",")
            } else {
                line.to_string()
            }
        })
        .collect()
}

#[test]
fn mqar_then_train_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    let gen = lcsm(
        &["mqar", "--seq-len", "16", "--vocab", "32", "--kv", "2", "--num", "400", "--seed", "3",
          "--out", "d.bin", "--jsonl", "d.jsonl"],
        dir.path(),
    );
    assert!(gen.status.success(), "{}", stderr(&gen));
    assert!(dir.path().join("d.bin").exists());
    assert!(dir.path().join("d.jsonl").exists());

    let train = lcsm(
        &["train", "--data", "d.bin", "--code", "1-1-1-2", "--d-model", "16", "--expand-k", "8",
          "--layers", "1", "--lr", "3e-3", "--steps", "12", "--batch", "8", "--seed", "1",
          "--eval-interval", "6", "--out", "run1"],
        dir.path(),
    );
    assert!(train.status.success(), "{}", stderr(&train));
    let csv = fs::read_to_string(dir.path().join("run1/metrics.csv")).unwrap();
    assert!(csv.starts_with("step,split,loss,ppl,acc,lr,wall_ms,status\n"));
    assert!(csv.lines().count() >= 3);
    assert!(dir.path().join("run1/best.ckpt").exists());
    assert!(dir.path().join("run1/config.toml").exists());
    let manifest = fs::read_to_string(dir.path().join("run1/manifest.json")).unwrap();
    assert!(manifest.contains("config_hash"));
    assert!(manifest.contains("metrics.csv"));

    // identical flags reproduce identical metrics modulo wall clock
    let rerun = lcsm(
        &["train", "--data", "d.bin", "--code", "1-1-1-2", "--d-model", "16", "--expand-k", "8",
          "--layers", "1", "--lr", "3e-3", "--steps", "12", "--batch", "8", "--seed", "1",
          "--eval-interval", "6", "--out", "run2"],
        dir.path(),
    );
    assert!(rerun.status.success());
    let csv2 = fs::read_to_string(dir.path().join("run2/metrics.csv")).unwrap();
    assert_eq!(strip_wall(&csv), strip_wall(&csv2));
}

#[test]
fn invalid_code_fails_with_range_message() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("x.bin"), b"junk").unwrap();
    let out = lcsm(&["train", "--data", "x.bin", "--code", "1-12-0-0"], dir.path());
    assert!(!out.status.success());
    let err = stderr(&out);
    assert!(err.contains("o_code") && err.contains("12"), "stderr: {err}");
}

#[test]
fn equiv_reports_all_rows_passing() {
    let dir = tempfile::tempdir().unwrap();
    let out = lcsm(&["equiv", "--out", "equiv.csv"], dir.path());
    assert!(out.status.success(), "{}", stderr(&out));
    let text = stdout(&out);
    assert_eq!(text.matches("PASS").count(), 21, "{text}");
    assert!(!text.contains("FAIL"));
    let csv = fs::read_to_string(dir.path().join("equiv.csv")).unwrap();
    assert!(csv.starts_with("method,check,max_abs_err,tol,status\n"));
    assert_eq!(csv.lines().count(), 22);
}

#[test]
fn gradcheck_single_code() {
    let dir = tempfile::tempdir().unwrap();
    let out = lcsm(&["gradcheck", "--code", "1-9-1-0", "--psi", "times"], dir.path());
    assert!(out.status.success(), "{}", stderr(&out));
    assert!(stdout(&out).contains("1/1 configurations pass"));
}

#[test]
fn sweep_writes_summary_with_grid_size_rows() {
    let dir = tempfile::tempdir().unwrap();
    let gen = lcsm(
        &["mqar", "--seq-len", "16", "--vocab", "32", "--kv", "2", "--num", "300", "--seed", "9",
          "--out", "d.bin"],
        dir.path(),
    );
    assert!(gen.status.success());
    let out = lcsm(
        &["sweep", "--data", "d.bin", "--grid-codes", "1-1-1-2,0-0-0-0", "--grid-lr", "3e-3",
          "--grid-tau", "1,16", "--d-model", "16", "--expand-k", "8", "--layers", "1",
          "--steps", "8", "--batch", "8", "--eval-interval", "8", "--out", "sweep"],
        dir.path(),
    );
    assert!(out.status.success(), "{}", stderr(&out));
    let summary = fs::read_to_string(dir.path().join("sweep/summary.csv")).unwrap();
    // header plus 2 codes x 1 lr x 2 tau
    assert_eq!(summary.lines().count(), 1 + 4);
    assert!(summary.starts_with("code,psi,tau,lr,status,"));
    for cell in ["1-1-1-2_lr0.003_tau1", "1-1-1-2_lr0.003_tau16", "0-0-0-0_lr0.003_tau1"] {
        assert!(dir.path().join("sweep").join(cell).join("metrics.csv").exists(), "{cell}");
    }
}

#[test]
fn infeasible_mqar_config_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let out = lcsm(
        &["mqar", "--seq-len", "8", "--vocab", "8", "--kv", "4", "--num", "10", "--out", "d.bin"],
        dir.path(),
    );
    assert!(!out.status.success());
    assert!(stderr(&out).contains("infeasible"));
}
