//! The whole experiment at smoke scale: phantom, pattern, acquisition, VAE training, prior,
//! MAP, chain and metrics, written under an output directory.
//!
//! `cargo run --release --example pipeline -- [OUT_DIR]`

use anyhow::Result;
use lmala::io::{prior_stage, run_experiment, train_stage, ExperimentConfig};

fn main() -> Result<()> {
    let tmp = tempfile::tempdir()?;
    let out = std::env::args().nth(1).map(Into::into).unwrap_or_else(|| tmp.path().to_path_buf());
    let cfg = ExperimentConfig {
        model_dir: out.join("models/vae"),
        prior_dir: out.join("models/prior"),
        out: out.join("run"),
        ..ExperimentConfig::smoke()
    };
    let training = train_stage(&cfg)?;
    println!("VAE ELBO {:.4e} → {:.4e}", training.initial_elbo, training.final_elbo);
    prior_stage(&cfg)?;
    let run = run_experiment(&cfg)?;
    for r in &run.reports {
        println!(
            "{:8} RMSE {:6.2}%  pairwise {:6.3}%  directionality {:.3}",
            r.method,
            r.rmse_percent.mean,
            r.pairwise_rmse.map_or(f64::NAN, |p| p.mean),
            r.directionality
        );
    }
    println!("outputs in {}", cfg.out.display());
    Ok(())
}
