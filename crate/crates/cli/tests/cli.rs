//! End-to-end runs of the `pvae` binary on small configurations.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use pvae_cli::manifest::RunManifest;

fn pvae(out: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pvae"))
        .args(args)
        .arg("--out")
        .arg(out)
        .env_remove("PVAE_THREADS")
        .output()
        .unwrap()
}

fn ok(out: &Path, args: &[&str]) {
    let o = pvae(out, args);
    assert!(
        o.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&o.stderr)
    );
}

const SMALL_FOAM: &str = r#"{
    "mode": "foam", "object_count": 4, "image_size": 32, "source_angles": 60, "sparse_angles": 8,
    "sirt_iterations": 10, "tv_iterations": 10, "epochs": 2, "batch_size": 2, "trials": 1,
    "checkpoint_every": 1, "point_samples": 2
}"#;

fn small_foam(dir: &Path) -> String {
    let p = dir.join("small.json");
    fs::write(&p, SMALL_FOAM).unwrap();
    p.to_string_lossy().into_owned()
}

#[test]
fn config_errors_exit_with_2() {
    let dir = tempfile::tempdir().unwrap();
    let run = dir.path().join("run");
    assert_eq!(
        pvae(&run, &["generate", "--set", "no_such_key=1"])
            .status
            .code(),
        Some(2)
    );
    assert_eq!(
        pvae(&run, &["generate", "--set", "image_size=-3"])
            .status
            .code(),
        Some(2)
    );
    let bad = dir.path().join("bad.json");
    fs::write(&bad, "{ not json").unwrap();
    assert_eq!(
        pvae(&run, &["generate", "--config", bad.to_str().unwrap()])
            .status
            .code(),
        Some(2)
    );
    assert_eq!(
        pvae(&run, &["baselines", "--set", "mode=\"toy\""])
            .status
            .code(),
        Some(2)
    );

    let o = Command::new(env!("CARGO_BIN_EXE_pvae"))
        .args(["generate", "--out"])
        .arg(&run)
        .env("PVAE_THREADS", "0")
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(2));
    assert!(!run.exists());
}

#[test]
fn missing_inputs_exit_with_3() {
    let dir = tempfile::tempdir().unwrap();
    let run = dir.path().join("run");
    for stage in ["baselines", "train", "evaluate", "report"] {
        assert_eq!(pvae(&run, &[stage]).status.code(), Some(3), "{stage}");
    }
}

#[test]
fn small_foam_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_foam(dir.path());
    let run = dir.path().join("run");
    for stage in ["generate", "baselines", "train", "evaluate", "report"] {
        ok(&run, &[stage, "--config", &cfg, "--threads", "1"]);
    }
    for stage in ["dataset", "baselines", "train", "evaluate", "report"] {
        let d = run.join(stage);
        assert!(
            RunManifest::read(&d).unwrap().matches_disk(&d).unwrap(),
            "{stage}"
        );
    }

    // One row per object and algorithm.
    let rows = |p: &Path| fs::read_to_string(p).unwrap().lines().count() - 1;
    assert_eq!(rows(&run.join("baselines/metrics.csv")), 4 * 5);
    assert_eq!(rows(&run.join("evaluate/metrics.csv")), 4 * 2);

    // Report is a pure function of the earlier stages.
    let before = RunManifest::read(&run.join("report")).unwrap();
    ok(&run, &["report", "--config", &cfg, "--threads", "1"]);
    assert_eq!(
        before.inventory_hash,
        RunManifest::read(&run.join("report"))
            .unwrap()
            .inventory_hash
    );

    // A changed config invalidates the trained checkpoints.
    let o = pvae(&run, &["evaluate", "--config", &cfg, "--set", "latent=3"]);
    assert_eq!(
        o.status.code(),
        Some(3),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
}
