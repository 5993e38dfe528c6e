use std::fs;
use std::path::Path;
use std::process::Command;

use spectral_homotopy::oracle::jprime_zero;
use spectral_homotopy_cli::{run_with, EXIT_IO, EXIT_NUMERICAL, EXIT_OK, EXIT_USAGE, OUT_ENV};

fn run(args: &[&str]) -> (i32, String, String) {
    let mut out = Vec::new();
    let mut err = Vec::new();
    let argv = std::iter::once("spectral-homotopy").chain(args.iter().copied());
    let code = run_with(argv, &mut out, &mut err);
    (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
}

fn out_arg(dir: &Path) -> String {
    dir.to_str().unwrap().to_string()
}

fn error_line_ok(err: &str, category: &str) {
    let lines: Vec<&str> = err.lines().collect();
    assert_eq!(lines.len(), 1, "{err}");
    assert!(lines[0].starts_with(&format!("error: category={category} message=\"")), "{err}");
    assert!(lines[0].ends_with('"'), "{err}");
}

#[test]
fn oracle_square_table() {
    let (code, out, _) = run(&["oracle", "--shape", "square", "--family", "1++", "--count", "6"]);
    assert_eq!(code, EXIT_OK);
    assert!(out.lines().any(|l| l == "(2,0):4"), "{out}");
    assert_eq!(out.lines().count(), 6);
}

#[test]
fn oracle_circle_csv() {
    let (code, out, _) = run(&["oracle", "--shape", "circle", "--family", "2", "--count", "2", "--csv"]);
    assert_eq!(code, EXIT_OK);
    let value: f64 = out.lines().nth(1).unwrap().rsplit(',').next().unwrap().parse().unwrap();
    let z = jprime_zero(1, 1).unwrap();
    assert!((value - z * z).abs() < 1e-9);
}

#[test]
fn solve_circle_start() {
    let dir = tempfile::tempdir().unwrap();
    let (code, out, err) = run(&["solve", "--map", "circleH", "--family", "1++", "--t", "0", "--n", "3", "--out", &out_arg(dir.path())]);
    assert_eq!(code, EXIT_OK, "{err}");
    let vals: Vec<f64> = out
        .lines()
        .filter(|l| l.starts_with("  "))
        .map(|l| l.split_whitespace().nth(2).unwrap().parse().unwrap())
        .collect();
    let pi2 = std::f64::consts::PI.powi(2);
    let want = [0.0, jprime_zero(0, 1).unwrap().powi(2) / pi2, jprime_zero(4, 1).unwrap().powi(2) / pi2];
    assert_eq!(vals.len(), 3);
    assert!(vals[0].abs() < 1e-8);
    for k in 1..3 {
        assert!((vals[k] / want[k] - 1.0).abs() < 5e-3, "{vals:?} vs {want:?}");
    }
    assert!(dir.path().join("spectrum.csv").exists());
    assert!(dir.path().join("manifest.txt").exists());
}

#[test]
fn sweep_then_classify_finds_collision() {
    let dir = tempfile::tempdir().unwrap();
    let o = out_arg(dir.path());
    let (code, _, err) = run(&["sweep", "--map", "circleH", "--family", "1--", "--out", &o]);
    assert_eq!(code, EXIT_OK, "{err}");
    let (code, _, err) = run(&["classify", "--out", &o]);
    assert_eq!(code, EXIT_OK, "{err}");
    let events = fs::read_to_string(dir.path().join("events.csv")).unwrap();
    let hit = events.lines().skip(1).find(|l| l.starts_with("1--,10,11,")).expect("modes 10/11 event");
    let cols: Vec<&str> = hit.split(',').collect();
    let t: f64 = cols[3].parse().unwrap();
    assert!((0.6..0.8).contains(&t), "{hit}");
    assert_eq!(cols[5], "Collision");

    let svg_dir = tempfile::tempdir().unwrap();
    let (code, _, err) = run(&["report", "--input", &o, "--out", &out_arg(svg_dir.path())]);
    assert_eq!(code, EXIT_OK, "{err}");
    let svg = fs::read_to_string(svg_dir.path().join("summary_1mm.svg")).unwrap();
    let doc = roxmltree::Document::parse(&svg).unwrap();
    let lines = doc.descendants().filter(|n| n.has_tag_name("polyline")).count();
    assert_eq!(lines, 12);
    assert_eq!(
        fs::read_to_string(svg_dir.path().join("trajectories.csv")).unwrap(),
        fs::read_to_string(dir.path().join("trajectories.csv")).unwrap()
    );
}

#[test]
fn sweeps_are_byte_identical() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    for d in [&a, &b] {
        let (code, _, err) = run(&[
            "sweep", "--map", "circleF", "--family", "1+-", "--h", "1/16", "--n", "4", "--grid", "0,0.5,1", "--out",
            &out_arg(d.path()),
        ]);
        assert_eq!(code, EXIT_OK, "{err}");
    }
    for f in ["trajectories.csv", "events.csv", "correspondence_1pm.csv", "summary_1pm.svg"] {
        assert_eq!(fs::read(a.path().join(f)).unwrap(), fs::read(b.path().join(f)).unwrap(), "{f}");
    }
}

#[test]
fn calibrate_writes_threshold() {
    let dir = tempfile::tempdir().unwrap();
    let (code, out, err) = run(&["calibrate", "--family", "1+-", "--h", "1/32", "--out", &out_arg(dir.path())]);
    assert_eq!(code, EXIT_OK, "{err}");
    assert!(out.contains("(5,5)/(7,1)") || out.contains("(7,1)/(5,5)"), "{out}");
    let manifest = fs::read_to_string(dir.path().join("manifest.txt")).unwrap();
    assert!(manifest.contains("calibrated_threshold = "));
}

#[test]
fn perturb_checks_pass() {
    let (code, out, err) = run(&["perturb", "--count", "5"]);
    assert_eq!(code, EXIT_OK, "{err}");
    assert!(out.contains("near-approaches repel"));
}

#[test]
fn usage_errors() {
    let (code, _, err) = run(&["sweep", "--frobnicate"]);
    assert_eq!(code, EXIT_USAGE);
    error_line_ok(&err, "usage");
    let (code, _, err) = run(&["solve", "--t", "0", "--h", "0.5"]);
    assert_eq!(code, EXIT_USAGE);
    error_line_ok(&err, "config");
    let (code, _, err) = run(&["solve", "--t", "0", "--map", "ellipse"]);
    assert_eq!(code, EXIT_USAGE);
    error_line_ok(&err, "config");
    let (code, _, err) = run(&["solve", "--t", "1.5", "--h", "1/8"]);
    assert_eq!(code, EXIT_USAGE);
    error_line_ok(&err, "argument");
    let (code, out, _) = run(&["--help"]);
    assert_eq!(code, EXIT_OK);
    assert!(out.contains("sweep"));
}

#[test]
fn missing_inputs_are_io_errors() {
    let dir = tempfile::tempdir().unwrap();
    let (code, _, err) = run(&["report", "--out", &out_arg(&dir.path().join("nothing"))]);
    assert_eq!(code, EXIT_IO);
    error_line_ok(&err, "io");
}

#[test]
fn unresolvable_mesh_is_numerical() {
    let dir = tempfile::tempdir().unwrap();
    let (code, _, err) = run(&["solve", "--map", "carpetG1", "--family", "1++", "--t", "1", "--h", "0.25", "--out", &out_arg(dir.path())]);
    assert_eq!(code, EXIT_NUMERICAL, "{err}");
    error_line_ok(&err, "mesh");
}

#[test]
fn config_file_with_override() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.cfg");
    fs::write(&cfg, "map = circleF\nfamilies = 2\nh = 1/8\nn_modes = 2\n").unwrap();
    let out = dir.path().join("o");
    let (code, stdout, err) = run(&["solve", "--config", cfg.to_str().unwrap(), "--n", "3", "--t", "1", "--out", &out_arg(&out)]);
    assert_eq!(code, EXIT_OK, "{err}");
    assert!(stdout.contains("map=circleF"));
    let manifest = fs::read_to_string(out.join("manifest.txt")).unwrap();
    assert!(manifest.contains("n_modes = 3") && manifest.contains("families = 2"), "{manifest}");
}

#[test]
fn output_directory_from_environment() {
    let dir = tempfile::tempdir().unwrap();
    let status = Command::new(env!("CARGO_BIN_EXE_spectral-homotopy"))
        .args(["solve", "--map", "circleH", "--family", "1--", "--t", "0.5", "--h", "1/8", "--n", "2"])
        .env(OUT_ENV, dir.path())
        .output()
        .unwrap();
    assert!(status.status.success(), "{}", String::from_utf8_lossy(&status.stderr));
    assert!(dir.path().join("spectrum.csv").exists());

    let bad = Command::new(env!("CARGO_BIN_EXE_spectral-homotopy")).arg("nope").output().unwrap();
    assert_eq!(bad.status.code(), Some(EXIT_USAGE));
}
