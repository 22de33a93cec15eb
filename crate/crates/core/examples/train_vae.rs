//! Trains the toy convolutional VAE on ellipse phantoms and reports ELBO and reconstruction error.
//!
//! `cargo run --release --example train_vae -- [ITERATIONS]`

use anyhow::Result;
use lmala::phantom::phantom_dataset;
use lmala::prior::{train_toy_vae, Decoder, Encoder, TrainingConfig};

fn main() -> Result<()> {
    let iterations = std::env::args().nth(1).map(|s| s.parse()).transpose()?.unwrap_or(300);
    let data = phantom_dataset(200, 32, 6, 11);
    let cfg = TrainingConfig { iterations, ..TrainingConfig::default() };
    let (enc, dec, report) = train_toy_vae(&data, &cfg)?;
    println!("ELBO {:.4e} → {:.4e}", report.initial_elbo, report.final_elbo);
    println!("reconstruction RMSE {:.4} → {:.4}", report.initial_rmse, report.final_rmse);
    let every = (report.batch_elbo.len() / 6).max(1);
    for (i, e) in report.batch_elbo.iter().enumerate().step_by(every) {
        println!("  batch {i:5}: ELBO {e:.4e}");
    }
    let (mu, _) = enc.encode(&data[0])?;
    let x = dec.decode_real(&mu)?;
    println!("latent {:?}, decoded image {:?}", mu.shape(), x.shape());
    Ok(())
}
