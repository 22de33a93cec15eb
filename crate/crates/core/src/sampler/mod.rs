//! Metropolis-adjusted Langevin sampling in latent space.

mod diagnostics;

pub use diagnostics::{autocorrelation, chain_diagnostics, effective_sample_size, ChainDiagnostics};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{ComplexArray, RealArray};
use crate::posterior::{log_posterior_and_grad, PosteriorEvaluation, PosteriorTarget};
use crate::prior::Encoder;
use crate::rng::ChainRng;

/// A differentiable unnormalized log-density over a real latent array.
pub trait LogDensity: Sync {
    fn evaluate(&self, z: &RealArray) -> Result<PosteriorEvaluation>;
}

impl LogDensity for PosteriorTarget {
    fn evaluate(&self, z: &RealArray) -> Result<PosteriorEvaluation> {
        log_posterior_and_grad(self, z)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ChainConfig {
    pub tau: f64,
    pub total_steps: usize,
    pub burn_in: usize,
    pub thinning: usize,
    pub seed: u64,
    pub target_acceptance: (f64, f64),
    pub adapt_tau: bool,
    /// Steps per adaptation window.
    pub adapt_window: usize,
}

impl Default for ChainConfig {
    fn default() -> Self {
        Self {
            tau: 4e-4,
            total_steps: 10_000,
            burn_in: 1_000,
            thinning: 1,
            seed: 0,
            target_acceptance: (0.3, 0.5),
            adapt_tau: true,
            adapt_window: 100,
        }
    }
}

impl ChainConfig {
    pub fn validate(&self) -> Result<()> {
        let (lo, hi) = self.target_acceptance;
        if !(self.tau > 0.0 && self.tau.is_finite())
            || self.total_steps == 0
            || self.burn_in >= self.total_steps
            || self.thinning == 0
            || self.adapt_window == 0
            || !(0.0..=1.0).contains(&lo)
            || !(lo..=1.0).contains(&hi)
        {
            return Err(Error::InvalidArgument(format!("invalid chain configuration {self:?}")));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ChainState {
    pub z: RealArray,
    pub eval: PosteriorEvaluation,
    pub step_index: usize,
    pub accept_count: usize,
}

impl ChainState {
    pub fn new(target: &dyn LogDensity, z: RealArray) -> Result<Self> {
        let eval = target.evaluate(&z)?;
        if !eval.log_post.is_finite() {
            return Err(Error::NumericalFailure { iteration: 0, context: "initial log-posterior".into() });
        }
        Ok(Self { z, eval, step_index: 0, accept_count: 0 })
    }
}

/// A proposed move with its evaluation; `None` stands for a log-posterior of `−∞`.
#[derive(Clone, Debug)]
pub struct Candidate {
    pub z: RealArray,
    pub eval: Option<PosteriorEvaluation>,
}

impl Candidate {
    /// Evaluates `z`; numerical failures and non-finite values become `−∞`.
    pub fn evaluate(target: &dyn LogDensity, z: RealArray) -> Result<Self> {
        let eval = match target.evaluate(&z) {
            Ok(e) if e.log_post.is_finite() && e.grad.is_finite() => Some(e),
            Ok(_) | Err(Error::NumericalFailure { .. }) | Err(Error::DegenerateScale) => None,
            Err(e) => return Err(e),
        };
        Ok(Self { z, eval })
    }
}

/// `ẑ = z + τ∇log p(z|y) + √(2τ)·ζ` with `ζ ~ N(0, I)`.
pub fn propose(state: &ChainState, tau: f64, rng: &mut ChainRng) -> RealArray {
    let k = (2.0 * tau).sqrt();
    let mut out = state.z.clone();
    for (o, g) in out.data_mut().iter_mut().zip(state.eval.grad.data()) {
        *o += tau * g + k * rng.normal();
    }
    out
}

/// `log q(to | from) = −‖to − from − τ∇(from)‖² / (4τ)` up to a constant.
fn log_q(to: &RealArray, from: &RealArray, grad_from: &RealArray, tau: f64) -> f64 {
    let sq: f64 = to
        .data()
        .iter()
        .zip(from.data())
        .zip(grad_from.data())
        .map(|((t, f), g)| (t - f - tau * g).powi(2))
        .sum();
    -sq / (4.0 * tau)
}

/// Log acceptance probability `min{0, log[p(ẑ)q(z|ẑ) / (p(z)q(ẑ|z))]}`.
pub fn log_acceptance(state: &ChainState, candidate: &Candidate, tau: f64) -> f64 {
    match &candidate.eval {
        None => f64::NEG_INFINITY,
        Some(c) => {
            let forward = log_q(&candidate.z, &state.z, &state.eval.grad, tau);
            let backward = log_q(&state.z, &candidate.z, &c.grad, tau);
            let a = c.log_post + backward - state.eval.log_post - forward;
            if a.is_nan() {
                f64::NEG_INFINITY
            } else {
                a.min(0.0)
            }
        }
    }
}

/// Metropolis–Hastings step. Returns the next state and whether the candidate was taken;
/// a rejected step copies the current state.
pub fn accept_reject(state: ChainState, candidate: Candidate, tau: f64, rng: &mut ChainRng) -> (ChainState, bool) {
    let alpha = log_acceptance(&state, &candidate, tau);
    let u = rng.uniform();
    let step_index = state.step_index + 1;
    if u.ln() < alpha {
        let eval = candidate.eval.expect("finite acceptance implies an evaluation");
        (ChainState { z: candidate.z, eval, step_index, accept_count: state.accept_count + 1 }, true)
    } else {
        (ChainState { step_index, ..state }, false)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ChainTrace {
    /// Retained post-burn-in states, thinned.
    pub samples: Vec<RealArray>,
    pub sample_steps: Vec<usize>,
    pub sample_scales: Vec<f64>,
    pub sample_log_post: Vec<f64>,
    /// Log-posterior of the current state after each step.
    pub log_post: Vec<f64>,
    pub accepted: Vec<bool>,
    pub accept_count: usize,
    pub burn_in: usize,
    pub initial_tau: f64,
    pub final_tau: f64,
    /// Step size in force during each adaptation window of the burn-in.
    pub tau_history: Vec<f64>,
}

impl ChainTrace {
    pub fn acceptance_rate(&self) -> f64 {
        self.accept_count as f64 / self.accepted.len() as f64
    }

    pub fn post_burn_in_acceptance(&self) -> f64 {
        let tail = &self.accepted[self.burn_in..];
        tail.iter().filter(|&&a| a).count() as f64 / tail.len() as f64
    }
}

/// Runs MALA from `z0`. During burn-in, if enabled, `τ` is multiplied by 1.1 after a
/// window whose acceptance exceeds the band and divided by 1.1 after one below it; it is
/// frozen afterwards.
pub fn run_chain_from(target: &dyn LogDensity, cfg: &ChainConfig, z0: RealArray) -> Result<ChainTrace> {
    cfg.validate()?;
    let mut rng = ChainRng::seed_from_u64(cfg.seed);
    let mut state = ChainState::new(target, z0)?;
    let mut tau = cfg.tau;
    let mut trace = ChainTrace {
        samples: Vec::new(),
        sample_steps: Vec::new(),
        sample_scales: Vec::new(),
        sample_log_post: Vec::new(),
        log_post: Vec::with_capacity(cfg.total_steps),
        accepted: Vec::with_capacity(cfg.total_steps),
        accept_count: 0,
        burn_in: cfg.burn_in,
        initial_tau: cfg.tau,
        final_tau: cfg.tau,
        tau_history: Vec::new(),
    };
    let mut window_accepts = 0;
    for t in 0..cfg.total_steps {
        let proposal = propose(&state, tau, &mut rng);
        let candidate = Candidate::evaluate(target, proposal)?;
        let (next, accepted) = accept_reject(state, candidate, tau, &mut rng);
        state = next;
        trace.log_post.push(state.eval.log_post);
        trace.accepted.push(accepted);
        window_accepts += accepted as usize;

        if t < cfg.burn_in && cfg.adapt_tau && (t + 1) % cfg.adapt_window == 0 {
            trace.tau_history.push(tau);
            let rate = window_accepts as f64 / cfg.adapt_window as f64;
            if rate > cfg.target_acceptance.1 {
                tau *= 1.1;
            } else if rate < cfg.target_acceptance.0 {
                tau /= 1.1;
            }
        }
        if (t + 1) % cfg.adapt_window == 0 {
            window_accepts = 0;
        }
        if t + 1 == cfg.burn_in && cfg.adapt_tau && state.accept_count == 0 {
            return Err(Error::StuckChain { steps: cfg.burn_in });
        }
        if t >= cfg.burn_in && (t - cfg.burn_in) % cfg.thinning == 0 {
            trace.samples.push(state.z.clone());
            trace.sample_steps.push(t);
            trace.sample_scales.push(state.eval.scale_used);
            trace.sample_log_post.push(state.eval.log_post);
        }
    }
    trace.accept_count = state.accept_count;
    trace.final_tau = tau;
    Ok(trace)
}

/// Runs MALA on the latent posterior starting from `z⁰ = μz(x_map)`.
pub fn run_chain(
    target: &PosteriorTarget,
    cfg: &ChainConfig,
    x_map: &ComplexArray,
    encoder: &dyn Encoder,
) -> Result<ChainTrace> {
    let (z0, _) = encoder.encode(&x_map.re())?;
    run_chain_from(target, cfg, z0)
}

/// Independent chains with seeds `cfg.seed + i`, run concurrently.
pub fn run_chains_from(target: &dyn LogDensity, cfg: &ChainConfig, z0: &RealArray, chains: usize) -> Result<Vec<ChainTrace>> {
    (0..chains)
        .into_par_iter()
        .map(|i| {
            let cfg = ChainConfig { seed: cfg.seed.wrapping_add(i as u64), ..cfg.clone() };
            run_chain_from(target, &cfg, z0.clone())
        })
        .collect()
}
