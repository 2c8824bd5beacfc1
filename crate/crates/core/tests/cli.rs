use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use radar_calib::pipeline::{load_pairs, load_scans, read_json, read_report};
use serde_json::Value;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_radar-calib"))
}

fn run(args: &[&str]) -> i32 {
    let out = bin().args(args).output().expect("binary runs");
    out.status.code().expect("exit code")
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn trial(dir: &Path) -> PathBuf {
    dir.join("sigma_0.1/duration_15/trial_000")
}

#[test]
fn experiment_matrix_creates_one_directory_per_trial() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("sim");
    let code = run(&[
        "simulate", "--trials", "100", "--sigma", "0.05,0.1,0.2", "--duration", "15,120", "--no-scans",
        "--out", p(&out),
    ]);
    assert_eq!(code, 0);
    let mut count = 0;
    for sigma in fs::read_dir(&out).unwrap().map(|e| e.unwrap().path()).filter(|p| p.is_dir()) {
        for duration in fs::read_dir(sigma).unwrap() {
            count += fs::read_dir(duration.unwrap().path()).unwrap().count();
        }
    }
    assert_eq!(count, 600);
    let run_file: Value = read_json(out.join("run.json")).unwrap();
    assert_eq!(run_file["config"]["experiment"]["trials"], 100);
    assert_eq!(run_file["seed"], 0);
}

#[test]
fn default_simulation_parses_back_and_stays_inside_out() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("sim");
    assert_eq!(run(&["simulate", "--out", p(&out)]), 0);
    let names: Vec<_> = fs::read_dir(tmp.path()).unwrap().map(|e| e.unwrap().file_name()).collect();
    assert_eq!(names, ["sim"]);
    let dir = trial(&out);
    let scans = load_scans(dir.join("scans.txt")).unwrap();
    assert_eq!(scans.keys().collect::<Vec<_>>(), ["a", "b"]);
    assert_eq!(scans["a"].len(), 301);
    assert_eq!(load_pairs(dir.join("pairs.txt")).unwrap().len(), 301);
}

#[test]
fn calibrate_exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    assert_eq!(run(&["simulate", "--seed", "3", "--out", p(&d.join("sim"))]), 0);
    let pairs = trial(&d.join("sim")).join("pairs.txt");

    assert_eq!(run(&["calibrate", "--pairs", p(&pairs), "--out", p(&d.join("ok"))]), 0);
    let report = read_report(d.join("ok/report.json")).unwrap();
    assert!(report.calibration.converged);
    assert!((report.calibration.extrinsics.theta_t - 1.74).abs() < 0.05);
    assert!((report.calibration.extrinsics.theta_ba + 1.58).abs() < 0.05);

    assert_eq!(run(&["calibrate", "--pairs", p(&d.join("missing.txt")), "--out", p(&d.join("x"))]), 3);
    assert_eq!(run(&["calibrate", "--out", p(&d.join("x"))]), 2);
    assert_eq!(run(&["calibrate", "--pairs", p(&pairs), "--bogus", "--out", p(&d.join("x"))]), 2);
    assert_eq!(run(&["--help"]), 0);

    let config = d.join("one_step.toml");
    fs::write(&config, "[solver]\nmax_iterations = 1\n").unwrap();
    let code = run(&["calibrate", "--pairs", p(&pairs), "--config", p(&config), "--out", p(&d.join("short"))]);
    assert_eq!(code, 6);
    assert!(!read_report(d.join("short/report.json")).unwrap().calibration.converged);

    assert_eq!(run(&["simulate", "--profile", "straight-line", "--no-scans", "--out", p(&d.join("line"))]), 0);
    let line = trial(&d.join("line")).join("pairs.txt");
    assert_eq!(run(&["calibrate", "--pairs", p(&line), "--out", p(&d.join("line_cal"))]), 4);
    let failure: Value = read_json(d.join("line_cal/failure.json")).unwrap();
    assert_eq!(failure["exit_code"], 4);
    assert!(failure["excitation"]["fraction_degenerate"].as_f64().unwrap() > 0.95);
}

#[test]
fn scans_without_consensus_exit_with_code_5() {
    let tmp = tempfile::tempdir().unwrap();
    let mut text = String::from("#radar-scans v1\n");
    for i in 0..5 {
        for id in ["a", "b"] {
            text.push_str(&format!("{},{id}", i as f64 * 0.05));
            for k in 0..12 {
                let az = -1.0 + 0.17 * k as f64;
                let rr = if k % 2 == 0 { 4.0 } else { -3.0 } * (1.0 + 0.37 * k as f64);
                text.push_str(&format!(",{},{az},{rr}", 5.0 + k as f64));
            }
            text.push('\n');
        }
    }
    let scans = tmp.path().join("scans.txt");
    fs::write(&scans, text).unwrap();
    assert_eq!(run(&["calibrate", "--scans", p(&scans), "--out", p(&tmp.path().join("out"))]), 5);
}

#[test]
fn evaluate_excitation_and_scale() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();

    assert_eq!(run(&["simulate", "--sigma", "0", "--no-scans", "--out", p(&d.join("clean"))]), 0);
    let clean = d.join("clean/sigma_0/duration_15/trial_000");
    let code = run(&[
        "evaluate", "--pairs", p(&clean.join("pairs.txt")), "--truth", p(&clean.join("truth.json")),
        "--out", p(&d.join("eval")),
    ]);
    assert_eq!(code, 0);
    let eval: Value = read_json(d.join("eval/evaluation.json")).unwrap();
    assert_eq!(eval["extrinsics_source"], "truth");
    assert!(eval["velocity_error_metric"].as_f64().unwrap() < 1e-12);

    for (sigma, exact) in [("0", true), ("0.1", false)] {
        let dir = d.join(format!("circle_{sigma}"));
        let code = run(&["simulate", "--profile", "constant-omega", "--sigma", sigma, "--no-scans", "--out", p(&dir)]);
        assert_eq!(code, 0);
        let circle = dir.join(format!("sigma_{sigma}/duration_15/trial_000/pairs.txt"));
        let ex_dir = dir.join("ex");
        assert_eq!(run(&["excitation-check", "--pairs", p(&circle), "--out", p(&ex_dir)]), 4);
        let ex: Value = read_json(ex_dir.join("excitation.json")).unwrap();
        let fraction = ex["report"]["fraction_degenerate"].as_f64().unwrap();
        // chance significance of the noisy rate slope spares a few steps
        assert!(if exact { fraction == 1.0 } else { fraction > 0.95 }, "{fraction}");
        assert!(ex["report"]["flags"].as_array().unwrap().contains(&Value::from("zero_alpha")));
    }

    let code = run(&[
        "simulate", "--translation-norm", "2", "--duration", "60", "--no-scans", "--out", p(&d.join("rig2")),
    ]);
    assert_eq!(code, 0);
    let rig = d.join("rig2/sigma_0.1/duration_60/trial_000");
    assert_eq!(run(&["calibrate", "--pairs", p(&rig.join("pairs.txt")), "--out", p(&d.join("cal2"))]), 0);
    for (flag, file) in [("--rates", "rates.csv"), ("--poses", "poses.csv")] {
        let out = d.join(format!("scale{flag}"));
        let code = run(&[
            "recover-scale", "--report", p(&d.join("cal2/report.json")), flag, p(&rig.join(file)),
            "--out", p(&out),
        ]);
        assert_eq!(code, 0);
        let scale: Value = read_json(out.join("scale.json")).unwrap();
        let m = scale["result"]["translation_magnitude"].as_f64().unwrap();
        assert!((m - 2.0).abs() < 0.1, "{flag}: {m}");
    }
}

#[test]
fn experiment_mode_writes_tables() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("exp");
    let code = run(&[
        "evaluate", "--experiment", "--trials", "4", "--sigma", "0.1", "--duration", "15", "--jobs", "2",
        "--out", p(&out),
    ]);
    assert_eq!(code, 0);
    let exp: Value = read_json(out.join("experiment.json")).unwrap();
    assert_eq!(exp["results"]["trials"].as_array().unwrap().len(), 4);
    let cells = fs::read_to_string(out.join("cells.csv")).unwrap();
    assert_eq!(cells.lines().count(), 2);
    let trials = fs::read_to_string(out.join("trials.csv")).unwrap();
    assert_eq!(trials.lines().count(), 5);
}
