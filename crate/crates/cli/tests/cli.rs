//! End-to-end tests of the `dhym` binary: exit-code contract, report
//! determinism, and the bundled data files.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_dhym"));
    // keep runs independent of the ambient environment
    c.env_remove("DHYM_OUT_DIR");
    c.current_dir(workspace_root());
    c
}

fn workspace_root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("spawn dhym")
}

fn write_cfg(dir: &Path, text: &str) -> PathBuf {
    let p = dir.join("config.ini");
    std::fs::write(&p, text).unwrap();
    p
}

/// A small manufactured m=1 problem that solves in a couple of seconds.
fn small_problem(dir: &Path) -> PathBuf {
    let p = dir.join("small.problem");
    std::fs::write(
        &p,
        "m 1\ngrid 32 32\ntheta0 1.0\nTheta0 1.4\nchi 1.0 0.0\nomega0 2.0 0.0\ntwist manufactured 0.1 0.05\n",
    )
    .unwrap();
    p
}

#[test]
fn stability_defaults_match_cp2() {
    let tmp = tempfile::tempdir().unwrap();
    let out = run(&["--out", tmp.path().to_str().unwrap(), "stability"]);
    assert!(out.status.success());
    let report: serde_json::Value =
        serde_json::from_slice(&out.stdout).expect("stdout is the JSON report");
    let theta0 = report["theta0"].as_f64().unwrap();
    assert!((theta0 - 2.2142974355881810).abs() < 1e-12, "{theta0}");
    let line = report["cycles"]
        .as_array()
        .unwrap()
        .iter()
        .find(|c| c["label"] == "line")
        .expect("line row present");
    assert_eq!(line["verdict"], "Stable");
    let c = line["coefficients"].as_array().unwrap();
    assert!((c.last().unwrap().as_f64().unwrap() - 2.75).abs() < 1e-12);
    assert!(tmp.path().join("stability.csv").exists());
    assert!(tmp.path().join("stability_report.json").exists());
}

#[test]
fn stability_empty_cycle_list_is_ok() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_cfg(tmp.path(), "[stability]\ncycles =\n");
    let out = run(&[
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        tmp.path().to_str().unwrap(),
        "stability",
    ]);
    assert!(out.status.success());
    let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(report["cycles"].as_array().unwrap().len(), 0);
}

#[test]
fn mollify_logpole_has_exact_lelong_rows() {
    let tmp = tempfile::tempdir().unwrap();
    let out = run(&["--out", tmp.path().to_str().unwrap(), "mollify"]);
    assert!(out.status.success());
    let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    let rows = report["rows"].as_array().unwrap();
    assert_eq!(rows.len(), 3);
    for row in rows {
        assert!((row["nu"].as_f64().unwrap() - 2.0).abs() < 1e-6);
        assert_eq!(row["ok_half"], true);
        assert_eq!(row["ok_moll"], true);
    }
}

#[test]
fn solve_small_manufactured_problem() {
    let tmp = tempfile::tempdir().unwrap();
    let prob = small_problem(tmp.path());
    let cfg = write_cfg(
        tmp.path(),
        &format!("[solve]\nproblem = {}\n", prob.display()),
    );
    let out = run(&[
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        tmp.path().to_str().unwrap(),
        "solve",
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(report["converged"], true);
    assert!(report["sup_error"].as_f64().unwrap() < 1e-6);
    assert!(tmp.path().join("phi.csv").exists());
    assert!(tmp.path().join("residual_history.csv").exists());
}

#[test]
fn exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    let outdir = tmp.path().to_str().unwrap().to_string();

    // negative twist: precondition refusal
    let cfg = write_cfg(
        tmp.path(),
        "[solve]\nproblem = data/problems/bad_twist.problem\n",
    );
    let out = run(&["--config", cfg.to_str().unwrap(), "--out", &outdir, "solve"]);
    assert_eq!(out.status.code(), Some(2));

    // grid too coarse for the requested radius
    let cfg = write_cfg(
        tmp.path(),
        "[mollify]\nchart = data/charts/coarse.chart\nradii = 0.25\n",
    );
    let out = run(&[
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        &outdir,
        "mollify",
    ]);
    assert_eq!(out.status.code(), Some(2));

    // zero tolerance is a config error naming the field
    let cfg = write_cfg(tmp.path(), "[angles]\ntolerance = 0\n");
    let out = run(&[
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        &outdir,
        "angles",
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("angles.tolerance"));

    // initial data outside the cone: ConeEscape → 3
    let esc = tmp.path().join("escape.problem");
    std::fs::write(
        &esc,
        "m 1\ngrid 16 16\ntheta0 1.0\nTheta0 1.4\nchi 1.0 0.0\nomega0 -1.0 0.0\ntwist constant 0.0\n",
    )
    .unwrap();
    let cfg = write_cfg(tmp.path(), &format!("[solve]\nproblem = {}\n", esc.display()));
    let out = run(&["--config", cfg.to_str().unwrap(), "--out", &outdir, "solve"]);
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));

    // iteration budget exhausted: MaxIterations → 4
    let prob = small_problem(tmp.path());
    let cfg = write_cfg(
        tmp.path(),
        &format!("[solve]\nproblem = {}\nmax_iter = 0\n", prob.display()),
    );
    let out = run(&["--config", cfg.to_str().unwrap(), "--out", &outdir, "solve"]);
    assert_eq!(out.status.code(), Some(4), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn out_dir_env_var_is_honored() {
    let tmp = tempfile::tempdir().unwrap();
    let out = bin()
        .env("DHYM_OUT_DIR", tmp.path())
        .args(["stability"])
        .output()
        .unwrap();
    assert!(out.status.success());
    assert!(tmp.path().join("stability_report.json").exists());
}

/// Collects (file name, bytes) for every report the run produced.
fn report_files(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<(String, Vec<u8>)> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (
                e.file_name().to_string_lossy().into_owned(),
                std::fs::read(e.path()).unwrap(),
            )
        })
        .collect();
    files.sort();
    files
}

#[test]
fn reports_are_byte_identical_across_runs() {
    let tmp = tempfile::tempdir().unwrap();
    let prob = small_problem(tmp.path());
    let cfg = write_cfg(
        tmp.path(),
        &format!(
            "[global]\nseed = 11\n\n[angles]\nsamples = 40\ndims = 2 3\nvariational_pairs = 3\nvariational_trials = 40\n\n\
             [solve]\nproblem = {}\n\n[mollify]\nradii = 0.375 0.25\n\n[calibrate]\nsamples = 25\n",
            prob.display()
        ),
    );
    for cmd in ["angles", "stability", "solve", "mollify", "calibrate"] {
        let dirs = [tmp.path().join("run_a"), tmp.path().join("run_b")];
        let mut stdouts = Vec::new();
        for d in &dirs {
            let _ = std::fs::remove_dir_all(d);
            let out = run(&[
                "--config",
                cfg.to_str().unwrap(),
                "--out",
                d.to_str().unwrap(),
                cmd,
            ]);
            assert!(
                out.status.success(),
                "{cmd}: {}",
                String::from_utf8_lossy(&out.stderr)
            );
            stdouts.push(out.stdout);
        }
        assert_eq!(stdouts[0], stdouts[1], "{cmd}: stdout differs");
        assert_eq!(
            report_files(&dirs[0]),
            report_files(&dirs[1]),
            "{cmd}: report files differ"
        );
    }
}
