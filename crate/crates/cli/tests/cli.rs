//! End-to-end runs of the command-line tool.

use std::path::Path;
use std::process::{Command, Output};

fn mchom(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mchom")).args(args).env("RUST_LOG", "warn").output().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn lists_presets() {
    let o = mchom(&["list-presets"]);
    assert_eq!(code(&o), 0);
    let text = String::from_utf8(o.stdout).unwrap();
    assert!(text.lines().any(|l| l == "smoke"));
    assert!(text.lines().any(|l| l == "gravity-dual-full"));
}

#[test]
fn config_errors_exit_with_2() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&mchom(&["compare", "--preset", "no-such-preset", "--out", path(dir.path())])), 2);
    let bad = mchom(&["compare", "--preset", "smoke", "--set", "fine.tau=-1", "--out", path(dir.path())]);
    assert_eq!(code(&bad), 2);
}

#[test]
fn compare_writes_reports() {
    let dir = tempfile::tempdir().unwrap();
    let o = mchom(&["compare", "--preset", "smoke", "--out", path(dir.path())]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(String::from_utf8(o.stdout).unwrap().starts_with("metric,continuum,value"));
    for f in ["manifest.txt", "config.toml", "errors.csv", "errors_series.csv", "timing.txt"] {
        assert!(dir.path().join(f).exists(), "missing {f}");
    }
}

#[test]
fn staged_run_matches_full_pipeline() {
    let staged = tempfile::tempdir().unwrap();
    let full = tempfile::tempdir().unwrap();
    assert_eq!(code(&mchom(&["run-fine", "--preset", "smoke", "--out", path(staged.path())])), 0);
    assert_eq!(code(&mchom(&["run-coarse", "--preset", "smoke", "--out", path(staged.path())])), 0);
    assert_eq!(code(&mchom(&["compare", "--preset", "smoke", "--sequential", "--out", path(full.path())])), 0);
    let read = |d: &Path| std::fs::read_to_string(d.join("errors.csv")).unwrap();
    assert_eq!(read(staged.path()), read(full.path()));
}

#[test]
fn cells_solve_reports_coefficients() {
    let dir = tempfile::tempdir().unwrap();
    let o = mchom(&["cells-solve", "--preset", "flattening", "--out", path(dir.path())]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let table = std::fs::read_to_string(dir.path().join("cells.csv")).unwrap();
    assert!(table.lines().count() > 1);
}
