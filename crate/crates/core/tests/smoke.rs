use std::path::Path;
use std::process::Command;
use std::time::Instant;

use lmala::io::{prior_stage, run_experiment, train_stage, ExperimentConfig, Stage};

fn smoke_config(root: &Path) -> ExperimentConfig {
    ExperimentConfig {
        model_dir: root.join("models/vae"),
        prior_dir: root.join("models/prior"),
        out: root.join("out"),
        ..ExperimentConfig::smoke()
    }
}

fn lmala(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_lmala")).args(args).env("LMS_THREADS", "1").env("RUST_LOG", "warn").output().unwrap()
}

#[test]
fn smoke_pipeline_finishes_within_a_minute() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = smoke_config(dir.path());
    let start = Instant::now();
    let report = train_stage(&cfg).unwrap();
    assert!(report.final_elbo > report.initial_elbo);
    prior_stage(&cfg).unwrap();
    let run = run_experiment(&cfg).unwrap();
    let secs = start.elapsed().as_secs_f64();
    assert!(secs < 60.0, "smoke pipeline took {secs:.1} s");

    assert_eq!(run.reports.len(), 3);
    assert!(run.samples.lmala.iter().all(|im| im.data().iter().all(|v| v.is_finite())));
    for file in ["config.json", "acquisition", "map", "chain", "samples", "diagnostics.json", "metrics.json", "metrics.csv"] {
        assert!(cfg.out.join(file).exists(), "missing {file}");
    }
}

#[test]
fn cli_runs_every_stage_and_repeats_byte_for_byte() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = smoke_config(dir.path());
    let cfg_path = dir.path().join("smoke.json");
    std::fs::write(&cfg_path, serde_json::to_string_pretty(&cfg).unwrap()).unwrap();
    let config = cfg_path.to_str().unwrap();
    let out = cfg.out.to_str().unwrap();

    for cmd in ["train-vae", "estimate-prior", "make-phantom", "make-pattern", "map", "sample", "metrics"] {
        let o = lmala(&[cmd, "--config", config, "--seed", "5"]);
        assert!(o.status.success(), "{cmd}: {}", String::from_utf8_lossy(&o.stderr));
    }
    let staged = std::fs::read(cfg.out.join("metrics.csv")).unwrap();

    let first = lmala(&["run", "--config", config, "--seed", "5", "--out", out]);
    assert!(first.status.success(), "{}", String::from_utf8_lossy(&first.stderr));
    let csv = std::fs::read(cfg.out.join("metrics.csv")).unwrap();
    let samples = std::fs::read(cfg.out.join("samples/lmala.bin")).unwrap();
    let second = lmala(&["run", "--config", config, "--seed", "5", "--out", out]);
    assert!(second.status.success());
    assert_eq!(first.stdout, second.stdout);
    assert_eq!(csv, std::fs::read(cfg.out.join("metrics.csv")).unwrap());
    assert_eq!(samples, std::fs::read(cfg.out.join("samples/lmala.bin")).unwrap());
    // The staged commands and `run` share one acquisition and chain.
    assert_eq!(staged, csv);
}

#[test]
fn cli_overrides_and_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = smoke_config(dir.path());
    let cfg_path = dir.path().join("smoke.json");
    std::fs::write(&cfg_path, serde_json::to_string(&cfg).unwrap()).unwrap();
    let config = cfg_path.to_str().unwrap();

    let bad_r = lmala(&["make-pattern", "--config", config, "--r", "0"]);
    assert_eq!(bad_r.status.code(), Some(Stage::Config.exit_code()));
    let bad_noise = lmala(&["make-phantom", "--config", config, "--noise-scale", "-1"]);
    assert_eq!(bad_noise.status.code(), Some(Stage::Config.exit_code()));
    let no_models = lmala(&["run", "--config", config]);
    assert_eq!(no_models.status.code(), Some(Stage::ModelLoad.exit_code()));
    let missing = lmala(&["map", "--config", dir.path().join("absent.json").to_str().unwrap()]);
    assert_eq!(missing.status.code(), Some(Stage::Config.exit_code()));

    let other = dir.path().join("elsewhere");
    let ok = lmala(&["make-pattern", "--config", config, "--r", "4", "--out", other.to_str().unwrap()]);
    assert!(ok.status.success(), "{}", String::from_utf8_lossy(&ok.stderr));
    let pattern: serde_json::Value = serde_json::from_slice(&std::fs::read(other.join("pattern.json")).unwrap()).unwrap();
    assert_eq!(pattern["acceleration"], 4.0);
}
