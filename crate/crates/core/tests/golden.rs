//! Short dual-continuum gravity run compared bit for bit with stored output.
//! Set `MCHOM_UPDATE_GOLDEN=1` to rewrite the stored files after a reviewed
//! change.

use std::path::PathBuf;

use mchom::experiment::{load_preset, run_to_dir};
use mchom::par::Exec;

const FILES: &[&str] = &["errors.csv", "errors_series.csv", "reference_averages.csv", "coarse_mh_velocity.csv"];

fn golden_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/golden/gravity-dual-mini")
}

fn mini_run(exec: Exec) -> tempfile::TempDir {
    let overrides = ["fine.steps=10".to_string(), "coarse.steps=10".to_string()];
    let cfg = load_preset("gravity-dual", &overrides).unwrap();
    let dir = tempfile::tempdir().unwrap();
    run_to_dir(&cfg, dir.path(), exec).unwrap();
    dir
}

#[test]
fn mini_run_matches_golden() {
    let out = mini_run(Exec::default());
    let golden = golden_dir();
    if std::env::var_os("MCHOM_UPDATE_GOLDEN").is_some() {
        std::fs::create_dir_all(&golden).unwrap();
        for f in FILES {
            std::fs::copy(out.path().join(f), golden.join(f)).unwrap();
        }
    }
    for f in FILES {
        let got = std::fs::read(out.path().join(f)).unwrap();
        let want = std::fs::read(golden.join(f)).unwrap_or_else(|_| panic!("missing golden file {f}"));
        assert!(got == want, "{f} differs from the golden copy");
    }
}

#[test]
fn sequential_and_parallel_runs_agree() {
    let a = mini_run(Exec::Sequential);
    let b = mini_run(Exec::default());
    for f in FILES {
        let x = std::fs::read(a.path().join(f)).unwrap();
        let y = std::fs::read(b.path().join(f)).unwrap();
        assert!(x == y, "{f} depends on the execution mode");
    }
}
