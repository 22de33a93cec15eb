//! Chain diagnostics: acceptance, autocorrelation and effective sample size.

use num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use super::ChainTrace;

/// Sample autocorrelation for lags `0..=max_lag`; a constant series is fully correlated.
pub fn autocorrelation(series: &[f64], max_lag: usize) -> Vec<f64> {
    let n = series.len();
    if n == 0 {
        return Vec::new();
    }
    let mean = series.iter().sum::<f64>() / n as f64;
    let centered: Vec<f64> = series.iter().map(|x| x - mean).collect();
    let c0: f64 = centered.iter().map(|x| x * x).sum();
    let lags = max_lag.min(n - 1);
    if c0 <= 1e-300 * n as f64 {
        return vec![1.0; lags + 1];
    }
    if lags <= DIRECT_MAX_LAG {
        return (0..=lags)
            .map(|k| centered[..n - k].iter().zip(&centered[k..]).map(|(a, b)| a * b).sum::<f64>() / c0)
            .collect();
    }
    // Wiener–Khinchin on a zero-padded buffer: no wrap-around for lags below n.
    let len = (2 * n).next_power_of_two();
    let mut planner = FftPlanner::new();
    let mut buf: Vec<Complex64> = centered.iter().map(|&x| Complex64::new(x, 0.0)).collect();
    buf.resize(len, Complex64::new(0.0, 0.0));
    planner.plan_fft_forward(len).process(&mut buf);
    buf.iter_mut().for_each(|v| *v = Complex64::new(v.norm_sqr(), 0.0));
    planner.plan_fft_inverse(len).process(&mut buf);
    let norm = buf[0].re;
    buf[..=lags].iter().map(|v| v.re / norm).collect()
}

/// Longest lag range computed by direct sums; longer ranges go through the FFT.
const DIRECT_MAX_LAG: usize = 64;

/// Effective sample size with Geyer's initial positive sequence estimator.
///
/// Consecutive autocorrelation pairs `Γ_m = ρ_{2m} + ρ_{2m+1}` are summed while positive,
/// each capped at the previous one (initial monotone sequence); `ESS = n / (2ΣΓ − 1)`.
/// A constant series has ESS 1.
pub fn effective_sample_size(series: &[f64]) -> f64 {
    let n = series.len();
    if n < 2 {
        return n as f64;
    }
    let acf = autocorrelation(series, n - 1);
    if acf.iter().all(|&r| r == 1.0) {
        return 1.0;
    }
    let mut sum = 0.0;
    let mut prev = f64::INFINITY;
    let mut m = 0;
    while 2 * m + 1 < acf.len() {
        let gamma = (acf[2 * m] + acf[2 * m + 1]).min(prev);
        if gamma <= 0.0 {
            break;
        }
        sum += gamma;
        prev = gamma;
        m += 1;
    }
    let tau = (2.0 * sum - 1.0).max(1.0 / n as f64);
    n as f64 / tau
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChainDiagnostics {
    pub acceptance_rate: f64,
    pub post_burn_in_acceptance: f64,
    pub final_tau: f64,
    /// Autocorrelation of the post-burn-in log-posterior, lags `0..=50`.
    pub log_post_acf: Vec<f64>,
    pub log_post_ess: f64,
    /// Smallest ESS over latent components of the retained samples.
    pub min_component_ess: f64,
    /// Masked mean image intensity of each retained sample, if supplied.
    pub mean_intensity: Option<Vec<f64>>,
    pub mean_intensity_ess: Option<f64>,
}

pub fn chain_diagnostics(trace: &ChainTrace, mean_intensity: Option<Vec<f64>>) -> ChainDiagnostics {
    let tail = &trace.log_post[trace.burn_in.min(trace.log_post.len())..];
    let dim = trace.samples.first().map_or(0, |s| s.len());
    let min_component_ess = (0..dim)
        .map(|i| {
            let series: Vec<f64> = trace.samples.iter().map(|s| s.data()[i]).collect();
            effective_sample_size(&series)
        })
        .fold(f64::INFINITY, f64::min);
    ChainDiagnostics {
        acceptance_rate: trace.acceptance_rate(),
        post_burn_in_acceptance: trace.post_burn_in_acceptance(),
        final_tau: trace.final_tau,
        log_post_acf: autocorrelation(tail, 50),
        log_post_ess: effective_sample_size(tail),
        min_component_ess: if dim == 0 { 0.0 } else { min_component_ess },
        mean_intensity_ess: mean_intensity.as_deref().map(effective_sample_size),
        mean_intensity,
    }
}
