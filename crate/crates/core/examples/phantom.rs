//! Builds a synthetic phantom with coils, bias and phase, and writes it as an array bundle.
//!
//! `cargo run --example phantom -- [OUT_DIR]`

use anyhow::Result;
use lmala::io::ExperimentConfig;
use lmala::phantom::{make_phantom, PhantomSpec};

fn main() -> Result<()> {
    let spec = PhantomSpec { size: 32, ellipses: 6, coils: 4, seed: 7 };
    let ph = make_phantom(&spec)?;
    let img = ph.image.data();
    let max = img.iter().cloned().fold(f64::MIN, f64::max);
    let fg = img.iter().filter(|&&v| v > 0.1 * max).count();
    println!("phantom {}×{}: max {max:.3}, {fg} foreground voxels, {} coils", spec.size, spec.size, ph.coils.coils());
    let bias = ph.bias.data();
    let (lo, hi) = bias.iter().fold((f64::MAX, f64::MIN), |(a, b), &v| (a.min(v), b.max(v)));
    println!("bias field in [{lo:.3}, {hi:.3}]");

    if let Some(dir) = std::env::args().nth(1) {
        let cfg = ExperimentConfig { phantom: spec, out: dir.into(), ..ExperimentConfig::default() };
        let written = lmala::io::phantom_stage(&cfg)?;
        println!("wrote {}", cfg.out.join("phantom").display());
        assert_eq!(written.image, ph.image);
    }
    Ok(())
}
