//! End-to-end tests of the command-line interface.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const BIN: &str = env!("CARGO_BIN_EXE_sklab");

const MINIMAL: &str = r#"
seed = 42
[phi]
kind = "stable"
alpha = 0.6
[psi]
kind = "stable"
alpha = 0.7
[domain]
shape = "disk"
radius = 1.0
[experiment]
kind = "verify-lemma"
id = "6.3"
sweep = { decades = 2.0, per_axis = 4 }
"#;

fn write_config(dir: &Path, text: &str) -> std::path::PathBuf {
    let path = dir.join("config.toml");
    fs::write(&path, text).unwrap();
    path
}

fn run(args: &[&str]) -> Output {
    Command::new(BIN).args(args).output().expect("spawn sklab")
}

#[test]
fn minimal_verify_config_runs_to_completion() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), MINIMAL);
    let out_dir = dir.path().join("out");
    let out = run(&[
        "verify",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("PASS lemma-6.3"), "stdout: {stdout}");
    assert!(out_dir.join("report.json").exists());
    assert!(out_dir.join("checks.csv").exists());
    assert!(out_dir.join("lemma-6.3-sweep.csv").exists());

    // CSV row count equals the sweep point count (4^3 plus a header).
    let sweep = fs::read_to_string(out_dir.join("lemma-6.3-sweep.csv")).unwrap();
    assert_eq!(sweep.lines().count(), 64 + 1);
}

#[test]
fn unknown_key_is_a_schema_error_naming_the_key() {
    let dir = tempfile::tempdir().unwrap();
    let bad = MINIMAL.replace("seed = 42", "seed = 42\ngamma_ = 1.0");
    let cfg = write_config(dir.path(), &bad);
    let out = run(&["verify", "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("gamma_"), "stderr should name the key: {stderr}");
}

#[test]
fn same_config_and_seed_produce_byte_identical_reports() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), MINIMAL);
    let out1 = dir.path().join("a");
    let out2 = dir.path().join("b");
    for out in [&out1, &out2] {
        let r = run(&[
            "verify",
            "--config",
            cfg.to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
        ]);
        assert!(r.status.success());
    }
    let a = fs::read(out1.join("report.json")).unwrap();
    let b = fs::read(out2.join("report.json")).unwrap();
    assert_eq!(a, b, "reports must be byte-identical");
    let a_csv = fs::read(out1.join("lemma-6.3-sweep.csv")).unwrap();
    let b_csv = fs::read(out2.join("lemma-6.3-sweep.csv")).unwrap();
    assert_eq!(a_csv, b_csv);
}

#[test]
fn seed_flag_overrides_config() {
    let dir = tempfile::tempdir().unwrap();
    let mc = r#"
seed = 1
[phi]
kind = "stable"
alpha = 0.7
[psi]
kind = "stable"
alpha = 0.6
[domain]
shape = "disk"
radius = 1.0
[experiment]
kind = "mc-survival"
r0 = 0.15
t = 0.1
z_steps = 32
points = 3
n = 500
slope_tol = 10.0
"#;
    let cfg = write_config(dir.path(), mc);
    let out1 = dir.path().join("s1");
    let out2 = dir.path().join("s2");
    let r1 = run(&["mc", "--config", cfg.to_str().unwrap(), "--seed", "7", "--out", out1.to_str().unwrap()]);
    let r2 = run(&["mc", "--config", cfg.to_str().unwrap(), "--seed", "8", "--out", out2.to_str().unwrap()]);
    assert!(r1.status.success(), "{}", String::from_utf8_lossy(&r1.stderr));
    assert!(r2.status.success(), "{}", String::from_utf8_lossy(&r2.stderr));
    let a = fs::read_to_string(out1.join("report.json")).unwrap();
    let b = fs::read_to_string(out2.join("report.json")).unwrap();
    assert_ne!(a, b, "different seeds should change the sampled values");
    assert!(a.contains("\"seed\": 7"));
    assert!(b.contains("\"seed\": 8"));
}

#[test]
fn wrong_subcommand_for_kind_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), MINIMAL);
    let out = run(&["mc", "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("not served"), "stderr: {stderr}");
}

#[test]
fn report_rerender_is_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), MINIMAL);
    let out_dir = dir.path().join("out");
    let r = run(&[
        "verify",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert!(r.status.success());
    let original = fs::read(out_dir.join("report.json")).unwrap();

    let render_dir = dir.path().join("render");
    let r = run(&[
        "report",
        "--input",
        out_dir.join("report.json").to_str().unwrap(),
        "--format",
        "structured-text",
        "--out",
        render_dir.to_str().unwrap(),
    ]);
    assert!(r.status.success(), "{}", String::from_utf8_lossy(&r.stderr));
    let rendered = fs::read(render_dir.join("report.json")).unwrap();
    assert_eq!(original, rendered, "re-emission must be byte-identical");

    // CSV re-render matches the direct emission too.
    let csv_dir = dir.path().join("csv");
    let r = run(&[
        "report",
        "--input",
        out_dir.join("report.json").to_str().unwrap(),
        "--format",
        "csv",
        "--out",
        csv_dir.to_str().unwrap(),
    ]);
    assert!(r.status.success());
    let direct = fs::read(out_dir.join("lemma-6.3-sweep.csv")).unwrap();
    let rerendered = fs::read(csv_dir.join("lemma-6.3-sweep.csv")).unwrap();
    assert_eq!(direct, rerendered);
}

#[test]
fn bf_subcommand_inspects_exponents() {
    let dir = tempfile::tempdir().unwrap();
    let cfg_text = r#"
seed = 3
[phi]
kind = "stable"
alpha = 0.6
[psi]
kind = "stable"
alpha = 0.5
[domain]
shape = "disk"
radius = 1.0
[experiment]
kind = "exponent-inspect"
"#;
    let cfg = write_config(dir.path(), cfg_text);
    let out_dir = dir.path().join("out");
    let out = run(&[
        "bf",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("PASS density-oracle"), "stdout: {stdout}");
    assert!(out_dir.join("exponent-values.csv").exists());
}
