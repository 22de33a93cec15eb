//! The latent posterior `log p(z|y) = log p(y|z) + log p(z) + const` and its gradient.

mod map;
mod spectrum;

pub use map::{map_estimate, MapResult};
pub use spectrum::ScaleSpectrum;

use std::sync::{Arc, OnceLock};

use log::warn;
use num_complex::Complex64;

use crate::autodiff::{cg_unrolled, Tape, Var};
use crate::encoding::{Encoding, KSpaceData, NormalOperator};
use crate::error::{Error, Result};
use crate::numerics::{CgConfig, ComplexArray, LinearOperator, RealArray};
use crate::prior::{Decoder, EmpiricalPrior};

/// How the intensity scale `s` of the encoding is chosen at each evaluation.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ScalePolicy {
    /// Closed-form `s*` from the current decoder mean, held constant for the gradient.
    PerEvaluation,
    Fixed(f64),
}

/// Everything needed to evaluate the unnormalized latent posterior.
#[derive(Clone)]
pub struct PosteriorTarget {
    decoder: Arc<dyn Decoder>,
    prior: Arc<EmpiricalPrior>,
    /// `E` at unit scale.
    encoding: Encoding,
    data: KSpaceData,
    /// `E₁ᴴΣns⁻¹y`, the data term at unit scale.
    back_projection: ComplexArray,
    cg: CgConfig,
    scale_policy: ScalePolicy,
    likelihood_weight: f64,
    residual_warning: f64,
    /// Built on first use by a per-evaluation scale policy.
    spectrum: Arc<OnceLock<ScaleSpectrum>>,
}

impl std::fmt::Debug for PosteriorTarget {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("PosteriorTarget")
            .field("latent_shape", &self.decoder.latent_shape())
            .field("cg", &self.cg)
            .field("scale_policy", &self.scale_policy)
            .field("likelihood_weight", &self.likelihood_weight)
            .finish()
    }
}

/// Value and gradient of the log-posterior at one `z`.
#[derive(Clone, Debug, PartialEq)]
pub struct PosteriorEvaluation {
    pub log_post: f64,
    pub log_likelihood: f64,
    pub log_prior: f64,
    pub grad: RealArray,
    pub scale_used: f64,
    pub cg_residual: f64,
}

impl PosteriorTarget {
    /// `data` must be the measurements `E` was built for; `encoding` may be the
    /// undersampled or fully sampled operator and its own scale is ignored.
    pub fn new(
        decoder: Arc<dyn Decoder>,
        prior: Arc<EmpiricalPrior>,
        encoding: &Encoding,
        data: KSpaceData,
        cg: CgConfig,
        scale_policy: ScalePolicy,
    ) -> Result<Self> {
        let latent = decoder.latent_shape();
        if prior.shape() != latent.as_slice() {
            return Err(Error::Shape(format!("prior shape {:?}, decoder latent {latent:?}", prior.shape())));
        }
        let (h, w) = decoder.output_shape();
        let encoding = encoding.with_scale(1.0);
        if encoding.domain_shape() != [h, w] {
            return Err(Error::Shape(format!("decoder image {:?}, encoding domain {:?}", (h, w), encoding.domain_shape())));
        }
        if encoding.codomain_shape() != data.samples.shape() {
            return Err(Error::Shape(format!(
                "encoding codomain {:?}, data {:?}",
                encoding.codomain_shape(),
                data.samples.shape()
            )));
        }
        if let ScalePolicy::Fixed(s) = scale_policy {
            if !(s > 0.0 && s.is_finite()) {
                return Err(Error::InvalidArgument(format!("fixed scale must be positive, got {s}")));
            }
        }
        let mut weighted = data.samples.clone();
        data.noise.apply_inverse(weighted.data_mut(), data.coils());
        let back_projection = encoding.adjoint(&weighted)?;
        Ok(Self {
            decoder,
            prior,
            encoding,
            data,
            back_projection,
            cg,
            scale_policy,
            likelihood_weight: 1.0,
            residual_warning: 1e-4,
            spectrum: Arc::new(OnceLock::new()),
        })
    }

    /// Multiplies the likelihood term; `0` gives a prior-only target.
    pub fn with_likelihood_weight(mut self, weight: f64) -> Self {
        self.likelihood_weight = weight;
        self
    }

    /// Relative CG residual above which a warning is logged.
    pub fn with_residual_warning(mut self, threshold: f64) -> Self {
        self.residual_warning = threshold;
        self
    }

    pub fn with_cg(mut self, cg: CgConfig) -> Self {
        self.cg = cg;
        self
    }

    pub fn with_scale_policy(mut self, policy: ScalePolicy) -> Result<Self> {
        if let ScalePolicy::Fixed(s) = policy {
            if !(s > 0.0 && s.is_finite()) {
                return Err(Error::InvalidArgument(format!("fixed scale must be positive, got {s}")));
            }
        }
        self.scale_policy = policy;
        Ok(self)
    }

    /// Eigen-decomposition of `E₁ᴴΣns⁻¹E₁` projected on the data, computed once.
    pub fn spectrum(&self) -> Result<&ScaleSpectrum> {
        if let Some(s) = self.spectrum.get() {
            return Ok(s);
        }
        let built = ScaleSpectrum::new(&self.encoding, &self.data.noise, &self.back_projection)?;
        Ok(self.spectrum.get_or_init(|| built))
    }

    /// Terms of `log p(y|z)` that depend on `z` only through the scale:
    /// `½ s²gᴴA⁻¹g − log det(I + s²σx²E₁ᴴΣns⁻¹E₁)` with `g = E₁ᴴΣns⁻¹y`.
    /// They are constant, and skipped, under a fixed scale.
    pub fn scale_terms(&self, scale: f64) -> Result<f64> {
        match self.scale_policy {
            ScalePolicy::Fixed(_) => Ok(0.0),
            ScalePolicy::PerEvaluation => Ok(self.spectrum()?.terms(scale, self.sigma_x())),
        }
    }

    pub fn decoder(&self) -> &Arc<dyn Decoder> {
        &self.decoder
    }

    pub fn prior(&self) -> &EmpiricalPrior {
        &self.prior
    }

    pub fn data(&self) -> &KSpaceData {
        &self.data
    }

    pub fn cg(&self) -> CgConfig {
        self.cg
    }

    pub fn scale_policy(&self) -> ScalePolicy {
        self.scale_policy
    }

    pub fn latent_shape(&self) -> Vec<usize> {
        self.decoder.latent_shape()
    }

    /// `E` at the given scale.
    pub fn encoding(&self, scale: f64) -> Encoding {
        self.encoding.with_scale(scale)
    }

    pub fn sigma_x(&self) -> f64 {
        self.decoder.sigma_x()
    }

    /// `EᴴΣns⁻¹y` for `E` at scale `s`.
    pub fn back_projection(&self, scale: f64) -> ComplexArray {
        self.back_projection.scale(Complex64::new(scale, 0.0))
    }

    /// Applies the scale policy to a decoder mean.
    pub fn scale_for(&self, mu: &RealArray) -> Result<f64> {
        match self.scale_policy {
            ScalePolicy::Fixed(s) => Ok(s),
            ScalePolicy::PerEvaluation => {
                let emu = self.encoding.apply(&mu.to_complex())?;
                let denom: f64 = emu.data().iter().map(|v| v.norm_sqr()).sum();
                let s = crate::numerics::vdot(emu.data(), self.data.samples.data()).re / denom;
                if denom == 0.0 || !s.is_finite() || s <= 0.0 {
                    return Err(Error::DegenerateScale);
                }
                Ok(s)
            }
        }
    }

    /// `A = Σx⁻¹ + EᴴΣns⁻¹E` at scale `s`.
    pub fn normal_operator(&self, scale: f64) -> Result<NormalOperator> {
        NormalOperator::new(self.encoding(scale), self.data.noise.clone(), self.sigma_x())
    }
}

/// Tape-recorded `log p(y|z)` up to a z-independent constant.
#[derive(Clone, Copy, Debug)]
pub struct LikelihoodNode {
    pub value: Var,
    pub scale: f64,
    pub cg_residual: f64,
}

/// Records `½Re(μᴴΣx⁻¹γ*) + Re(yᴴΣns⁻¹Eγ*) − ½μᴴΣx⁻¹μ` with
/// `γ* = (Σx⁻¹ + EᴴΣns⁻¹E)⁻¹Σx⁻¹μ` solved by unrolled CG, plus [`PosteriorTarget::scale_terms`].
///
/// This equals `−½(y − Eμ)ᴴ(EΣxEᴴ + Σns)⁻¹(y − Eμ) − log det(EΣxEᴴ + Σns)` up to a constant.
/// The scale is held fixed for the gradient, so the scale terms enter the value only.
pub fn log_likelihood(target: &PosteriorTarget, tape: &mut Tape, z: Var) -> Result<LikelihoodNode> {
    let mu = target.decoder.forward(tape, z)?;
    let scale = target.scale_for(&tape.real_array(mu))?;
    let inv_var = 1.0 / (target.sigma_x() * target.sigma_x());
    let a: Arc<dyn LinearOperator> = Arc::new(target.normal_operator(scale)?);
    let mu_c = tape.to_complex(mu);
    let rhs = tape.cscale(mu_c, Complex64::new(inv_var, 0.0));
    let solve = cg_unrolled(tape, a, rhs, target.cg.iterations)?;
    let prior_fit = tape.re_dot(mu_c, solve.solution);
    let prior_fit = tape.scale(prior_fit, 0.5 * inv_var);
    let g = tape.constant_complex(&target.back_projection(scale));
    let data_fit = tape.re_dot(g, solve.solution);
    let energy = tape.dot(mu, mu);
    let energy = tape.scale(energy, -0.5 * inv_var);
    let sum = tape.add(prior_fit, data_fit);
    let value = tape.add(sum, energy);
    let value = tape.offset(value, target.scale_terms(scale)?);
    if !tape.scalar(value).is_finite() {
        return Err(Error::NumericalFailure { iteration: target.cg.iterations, context: "log-likelihood".into() });
    }
    Ok(LikelihoodNode { value, scale, cg_residual: solve.relative_residual })
}

/// `log p(y|z) + log p(z)` and its gradient in `z`.
pub fn log_posterior_and_grad(target: &PosteriorTarget, z: &RealArray) -> Result<PosteriorEvaluation> {
    let (log_prior, prior_grad) = target.prior.logpdf_and_grad(z)?;
    if target.likelihood_weight == 0.0 {
        return Ok(PosteriorEvaluation {
            log_post: log_prior,
            log_likelihood: 0.0,
            log_prior,
            grad: prior_grad,
            scale_used: target.scale_for(&target.decoder.decode_real(z)?)?,
            cg_residual: 0.0,
        });
    }
    let mut tape = Tape::new();
    let zv = tape.leaf(z);
    let node = log_likelihood(target, &mut tape, zv)?;
    if node.cg_residual > target.residual_warning {
        warn!(
            "CG relative residual {:.3e} exceeds {:.1e} after {} iterations",
            node.cg_residual, target.residual_warning, target.cg.iterations
        );
    }
    let lik_grad = tape.grad(node.value, &[zv])?.pop().expect("one gradient");
    let w = target.likelihood_weight;
    let log_likelihood = w * tape.scalar(node.value);
    let grad = lik_grad.zip_map(&prior_grad, |a, b| w * a + b)?;
    Ok(PosteriorEvaluation {
        log_post: log_likelihood + log_prior,
        log_likelihood,
        log_prior,
        grad,
        scale_used: node.scale,
        cg_residual: node.cg_residual,
    })
}

#[cfg(test)]
mod tests;
