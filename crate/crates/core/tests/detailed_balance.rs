//! Goodness of fit of long MALA runs against analytic Gaussian targets.

use lmala::numerics::RealArray;
use lmala::posterior::PosteriorEvaluation;
use lmala::sampler::{run_chain_from, ChainConfig, LogDensity};
use statrs::distribution::{ChiSquared, ContinuousCDF};

/// `N(0, C)` with `C = R diag(σ₁², σ₂²) Rᵀ`, `R` a rotation by `θ`.
struct Anisotropic {
    precision: [[f64; 2]; 2],
    /// Maps samples to standard-normal coordinates.
    whiten: [[f64; 2]; 2],
}

impl Anisotropic {
    fn new(s1: f64, s2: f64, theta: f64) -> Self {
        let (c, s) = (theta.cos(), theta.sin());
        let rot = [[c, -s], [s, c]];
        let inv = [1.0 / (s1 * s1), 1.0 / (s2 * s2)];
        let mut precision = [[0.0; 2]; 2];
        for i in 0..2 {
            for j in 0..2 {
                precision[i][j] = (0..2).map(|k| rot[i][k] * inv[k] * rot[j][k]).sum();
            }
        }
        // diag(1/σ) Rᵀ
        let whiten = [[c / s1, s / s1], [-s / s2, c / s2]];
        Self { precision, whiten }
    }
}

impl LogDensity for Anisotropic {
    fn evaluate(&self, z: &RealArray) -> lmala::Result<PosteriorEvaluation> {
        let v = [z.data()[0], z.data()[1]];
        let p = [
            self.precision[0][0] * v[0] + self.precision[0][1] * v[1],
            self.precision[1][0] * v[0] + self.precision[1][1] * v[1],
        ];
        let log_post = -0.5 * (v[0] * p[0] + v[1] * p[1]);
        Ok(PosteriorEvaluation {
            log_post,
            log_likelihood: log_post,
            log_prior: 0.0,
            grad: RealArray::new(vec![2], vec![-p[0], -p[1]])?,
            scale_used: 1.0,
            cg_residual: 0.0,
        })
    }
}

#[test]
fn anisotropic_gaussian_passes_chi_square() {
    let target = Anisotropic::new(1.0, 0.25, 0.6);
    let samples = 100_000;
    let thinning = 25;
    let burn_in = 20_000;
    let cfg = ChainConfig {
        tau: 4e-4,
        total_steps: burn_in + samples * thinning,
        burn_in,
        thinning,
        seed: 2024,
        ..ChainConfig::default()
    };
    let trace = run_chain_from(&target, &cfg, RealArray::new(vec![2], vec![0.5, -0.5]).unwrap()).unwrap();
    assert_eq!(trace.samples.len(), samples);

    // In whitened coordinates, 1 − exp(−r²/2) and the polar angle are independent uniforms.
    let bins = 8;
    let mut counts = vec![0usize; bins * bins];
    for s in &trace.samples {
        let (a, b) = (s.data()[0], s.data()[1]);
        let u = target.whiten[0][0] * a + target.whiten[0][1] * b;
        let v = target.whiten[1][0] * a + target.whiten[1][1] * b;
        let radial = 1.0 - (-(u * u + v * v) / 2.0).exp();
        let angle = (v.atan2(u) + std::f64::consts::PI) / (2.0 * std::f64::consts::PI);
        let i = ((radial * bins as f64) as usize).min(bins - 1);
        let j = ((angle * bins as f64) as usize).min(bins - 1);
        counts[i * bins + j] += 1;
    }
    let expected = samples as f64 / (bins * bins) as f64;
    let chi2: f64 = counts.iter().map(|&k| (k as f64 - expected).powi(2) / expected).sum();
    let p = ChiSquared::new((bins * bins - 1) as f64).unwrap().sf(chi2);
    assert!(p > 0.01, "χ² = {chi2:.1}, p = {p:.4}, acceptance {:.3}", trace.post_burn_in_acceptance());
}
