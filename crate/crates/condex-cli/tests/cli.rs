//! End-to-end tests of the `condex` binary: pipeline wiring, artifact
//! layout, exit codes and reproducibility.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const TINY_CONFIG: &str = r#"
[dataset]
categories = 3
instances_per_category = 4
grasps_per_object = 12
seed = 1

[render]
patch_size = 32

[training]
model = "condex"
steps = 4
batch_tasks = 2
targets_per_task = 2
k_min = 1
k_max = 2
conv1_channels = 2
conv1_kernel = 5
conv2_channels = 2
conv2_kernel = 3
hidden = 8
repr_dim = 4
seed = 3

[eval]
k_values = [0, 1, 2]
trials = 2
pool_size = 3
context_budget = 2
targets_per_episode = 2
strategy = "random"
"#;

fn condex(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_condex"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn run_ok(args: &[&str]) -> String {
    let out = condex(args);
    assert!(
        out.status.success(),
        "command {args:?} failed\nstdout: {}\nstderr: {}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn run_fail(args: &[&str]) -> (i32, String) {
    let out = condex(args);
    let code = out.status.code().expect("exit code");
    assert_ne!(code, 0, "command {args:?} unexpectedly succeeded");
    (code, String::from_utf8_lossy(&out.stderr).into_owned())
}

fn write_config(dir: &Path) -> String {
    let path = dir.join("exp.toml");
    fs::write(&path, TINY_CONFIG).unwrap();
    path.to_string_lossy().into_owned()
}

#[test]
fn pipeline_runs_end_to_end() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path());
    let out = tmp.path().join("run");
    let out_s = out.to_string_lossy().into_owned();

    let s = run_ok(&["gen-objects", "--config", &cfg, "--out", &out_s]);
    assert!(s.contains("12 objects"), "{s}");
    assert!(out.join("objects/catalog.txt").exists());
    assert!(out.join("config.toml").exists());

    let s = run_ok(&["collect", "--config", &cfg, "--out", &out_s]);
    assert!(s.contains("144 observations"), "{s}");
    assert!(out.join("shards/manifest.txt").exists());
    assert!(out.join("shards/shard_0000.bin").exists());

    let s = run_ok(&["stats", "--config", &cfg, "--out", &out_s]);
    assert!(s.contains("total: 144 observations"), "{s}");
    assert!(s.contains("category 0"), "{s}");

    let s = run_ok(&[
        "calibrate",
        "--config",
        &cfg,
        "--out",
        &out_s,
        "--sample",
        "6",
        "--target",
        "0.35",
        "--tolerance",
        "0.2",
    ]);
    assert!(s.contains("clamp force"), "{s}");
    assert!(out.join("metrics/calibration.txt").exists());

    let s = run_ok(&["train", "--config", &cfg, "--out", &out_s]);
    assert!(s.contains("trained condex-mean for 4 steps"), "{s}");
    assert!(out.join("checkpoints/condex-seed3.ckpt").exists());
    assert!(out.join("metrics/train-condex-mean-seed3.csv").exists());

    let s = run_ok(&["eval-error", "--config", &cfg, "--out", &out_s]);
    assert!(s.contains("eval-error condex-mean K=2"), "{s}");
    assert!(s.contains("cross"), "{s}");
    assert!(out.join("metrics/eval-error-condex-mean-seed0.csv").exists());

    let s = run_ok(&["curve", "--config", &cfg, "--out", &out_s]);
    assert!(s.contains("curve condex-mean cross"), "{s}");
    let csv = out.join("metrics/curve-condex-mean-cross-seed0.csv");
    assert!(csv.exists());
    assert!(out.join("metrics/curve-condex-mean-cross-seed0.svg").exists());
    let table = fs::read_to_string(&csv).unwrap();
    assert_eq!(table.lines().count(), 4, "{table}"); // header + K in {0,1,2}

    let s = run_ok(&["eval-grasp", "--config", &cfg, "--out", &out_s, "--objects", "4"]);
    assert!(s.contains("eval-grasp condex-mean random cross"), "{s}");
    assert!(out.join("metrics/eval-grasp-condex-mean-random-seed0.csv").exists());

    let s = run_ok(&["export", "--config", &cfg, "--out", &out_s]);
    assert!(s.contains("exported"), "{s}");
    assert!(out.join("export/metrics.csv").exists());
    assert!(out.join("export/config.toml").exists());
    let inventory = fs::read_to_string(out.join("export/inventory.txt")).unwrap();
    assert!(inventory.contains("shards/manifest.txt"), "{inventory}");
    let merged = fs::read_to_string(out.join("export/metrics.csv")).unwrap();
    assert!(merged.lines().count() > 4, "{merged}");
}

#[test]
fn missing_artifacts_name_their_producer() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path());
    let out = tmp.path().join("fresh");
    let out_s = out.to_string_lossy().into_owned();

    let (code, err) = run_fail(&["collect", "--config", &cfg, "--out", &out_s]);
    assert_eq!(code, 1);
    assert!(err.contains("condex gen-objects"), "{err}");

    let (code, err) = run_fail(&["train", "--config", &cfg, "--out", &out_s]);
    assert_eq!(code, 1);
    assert!(err.contains("condex collect"), "{err}");

    run_ok(&["gen-objects", "--config", &cfg, "--out", &out_s]);
    run_ok(&["collect", "--config", &cfg, "--out", &out_s]);
    let (code, err) = run_fail(&["eval-error", "--config", &cfg, "--out", &out_s]);
    assert_eq!(code, 1);
    assert!(err.contains("condex train"), "{err}");
}

#[test]
fn config_mistakes_exit_one_usage_mistakes_exit_two() {
    let tmp = tempfile::tempdir().unwrap();
    let bad = tmp.path().join("bad.toml");
    fs::write(&bad, "[training]\nlearning_rate = 0.1\n").unwrap();
    let out_s = tmp.path().join("x").to_string_lossy().into_owned();

    let (code, err) = run_fail(&[
        "gen-objects",
        "--config",
        &bad.to_string_lossy(),
        "--out",
        &out_s,
    ]);
    assert_eq!(code, 1);
    assert!(err.contains("learning_rate") || err.contains("unknown"), "{err}");

    let (code, _) = run_fail(&["gen-objects", "--nope", "--out", &out_s]);
    assert_eq!(code, 2);
    let (code, _) = run_fail(&["not-a-command"]);
    assert_eq!(code, 2);
}

#[test]
fn mixed_configs_in_one_run_directory_are_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg_a = write_config(tmp.path());
    let cfg_b = tmp.path().join("other.toml");
    fs::write(&cfg_b, TINY_CONFIG.replace("steps = 4", "steps = 5")).unwrap();
    let out_s = tmp.path().join("run").to_string_lossy().into_owned();

    run_ok(&["gen-objects", "--config", &cfg_a, "--out", &out_s]);
    let (code, err) = run_fail(&[
        "collect",
        "--config",
        &cfg_b.to_string_lossy(),
        "--out",
        &out_s,
    ]);
    assert_eq!(code, 1);
    assert!(err.contains("different config"), "{err}");
}

#[test]
fn identical_runs_produce_identical_artifacts() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path());
    let mut snapshots: Vec<Vec<(String, Vec<u8>)>> = Vec::new();
    for name in ["a", "b"] {
        let out = tmp.path().join(name);
        let out_s = out.to_string_lossy().into_owned();
        run_ok(&["gen-objects", "--config", &cfg, "--out", &out_s]);
        run_ok(&["collect", "--config", &cfg, "--out", &out_s, "--deterministic"]);
        run_ok(&["train", "--config", &cfg, "--out", &out_s]);
        run_ok(&["curve", "--config", &cfg, "--out", &out_s]);
        let files = [
            "objects/catalog.txt",
            "shards/manifest.txt",
            "shards/shard_0000.bin",
            "checkpoints/condex-seed3.ckpt",
            "metrics/train-condex-mean-seed3.csv",
            "metrics/curve-condex-mean-cross-seed0.csv",
        ];
        snapshots.push(
            files
                .iter()
                .map(|f| (f.to_string(), fs::read(out.join(f)).unwrap()))
                .collect(),
        );
    }
    let b = snapshots.pop().unwrap();
    let a = snapshots.pop().unwrap();
    for ((name, bytes_a), (_, bytes_b)) in a.iter().zip(&b) {
        assert_eq!(bytes_a, bytes_b, "{name} differs between identical runs");
    }
}
