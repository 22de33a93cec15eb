//! From latent samples to images: the data-consistent posterior mean `E[x|z, y]` and the
//! two data-free baselines (decoder means and encoder-local samples).

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::encoding::{Encoding, NoiseCovariance};
use crate::error::{Error, Result};
use crate::numerics::{cg_solve, ComplexArray, LinearOperator, RealArray};
use crate::posterior::PosteriorTarget;
use crate::prior::{Decoder, Encoder};
use crate::rng::ChainRng;

/// Which linear system produces the image.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum ImageRoute {
    /// `x̂ = (Σx⁻¹ + EᴴΣns⁻¹E)⁻¹(Σx⁻¹μx + EᴴΣns⁻¹y)` in the image domain.
    #[default]
    Exact,
    /// `(E_FΣx⁻¹E_Fᴴ + UᴴΣns⁻¹U)γ = E_FΣx⁻¹μx + UᴴΣns⁻¹y`, then `x = E_Fᴴγ`.
    /// Agrees with [`ImageRoute::Exact`] only when `E_F` has orthonormal columns.
    KSpace,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ImageSample {
    /// Real part of the posterior mean, on the decoder's intensity scale and bias-free.
    pub magnitude: RealArray,
    /// The complex posterior mean the magnitude was taken from.
    pub complex: ComplexArray,
    pub scale: f64,
    /// `B ⊙ magnitude`.
    pub reapplied_bias: RealArray,
    pub step_index: usize,
}

/// Posterior mean image at `z` via the exact image-domain route.
pub fn latent_to_image(target: &PosteriorTarget, z: &RealArray) -> Result<ImageSample> {
    latent_to_image_with(target, z, ImageRoute::Exact, 0)
}

pub fn latent_to_image_with(
    target: &PosteriorTarget,
    z: &RealArray,
    route: ImageRoute,
    step_index: usize,
) -> Result<ImageSample> {
    let mu = target.decoder().decode_real(z)?;
    let scale = target.scale_for(&mu)?;
    let inv_var = 1.0 / (target.sigma_x() * target.sigma_x());
    let mu_c = mu.to_complex();
    let complex = match route {
        ImageRoute::Exact => {
            let a = target.normal_operator(scale)?;
            let rhs = mu_c.scale(Complex64::new(inv_var, 0.0)).add(&target.back_projection(scale))?;
            cg_solve(&a, &rhs, target.cg())?.solution
        }
        ImageRoute::KSpace => {
            let e = target.encoding(scale);
            let op = KSpaceOperator::new(e.clone(), target.data().noise.clone(), target.sigma_x())?;
            let e_f = e.fully_sampled();
            let mut weighted = target.data().samples.clone();
            target.data().noise.apply_inverse(weighted.data_mut(), e.coils());
            let data_term = e.zero_fill(weighted.data());
            let prior_term = e_f.apply(&mu_c)?;
            let rhs = ComplexArray::new(
                op.domain_shape(),
                prior_term.data().iter().zip(&data_term).map(|(p, d)| p * inv_var + d).collect(),
            )?;
            let gamma = cg_solve(&op, &rhs, target.cg())?.solution;
            e_f.adjoint(&gamma)?
        }
    };
    if !complex.is_finite() {
        return Err(Error::NumericalFailure { iteration: target.cg().iterations, context: "image step".into() });
    }
    let magnitude = complex.re();
    let bias = target.encoding(scale).image_bias();
    let reapplied_bias = magnitude.zip_map(&bias, |m, b| m * b)?;
    Ok(ImageSample { magnitude, complex, scale, reapplied_bias, step_index })
}

/// `E_FΣx⁻¹E_Fᴴ + UᴴΣns⁻¹U` on the fully sampled k-space grid `[C, Hp, Wp]`.
#[derive(Clone, Debug)]
pub struct KSpaceOperator {
    encoding: Encoding,
    full: Encoding,
    noise: NoiseCovariance,
    inv_sigma_x2: f64,
}

impl KSpaceOperator {
    pub fn new(encoding: Encoding, noise: NoiseCovariance, sigma_x: f64) -> Result<Self> {
        if !(sigma_x > 0.0 && sigma_x.is_finite()) {
            return Err(Error::InvalidArgument(format!("σx must be positive, got {sigma_x}")));
        }
        noise.validate(encoding.coils())?;
        let full = encoding.fully_sampled();
        let encoding = encoding.undersampled();
        Ok(Self { encoding, full, noise, inv_sigma_x2: 1.0 / (sigma_x * sigma_x) })
    }
}

impl LinearOperator for KSpaceOperator {
    fn domain_shape(&self) -> Vec<usize> {
        self.full.codomain_shape()
    }

    fn codomain_shape(&self) -> Vec<usize> {
        self.full.codomain_shape()
    }

    fn apply_slice(&self, x: &[Complex64]) -> Vec<Complex64> {
        let mut out = self.full.apply_slice(&self.full.adjoint_slice(x));
        out.iter_mut().for_each(|v| *v *= self.inv_sigma_x2);
        let mut measured = self.encoding.select_lines(x);
        self.noise.apply_inverse(&mut measured, self.encoding.coils());
        out.iter_mut().zip(self.encoding.zero_fill(&measured)).for_each(|(o, d)| *o += d);
        out
    }

    fn adjoint_slice(&self, y: &[Complex64]) -> Vec<Complex64> {
        self.apply_slice(y)
    }
}

/// The decoder mean `μx(z)`, ignoring the data.
pub fn decoder_only_sample(decoder: &dyn Decoder, z: &RealArray) -> Result<ComplexArray> {
    decoder.decode(z)
}

/// Decodes `count` draws from `q(z|x_ref)`; no data term and no accept/reject step.
pub fn local_sampler(
    encoder: &dyn Encoder,
    decoder: &dyn Decoder,
    x_ref: &RealArray,
    count: usize,
    rng: &mut ChainRng,
) -> Result<Vec<ComplexArray>> {
    if count == 0 {
        return Err(Error::InvalidArgument("local sampler needs count ≥ 1".into()));
    }
    let (mu, sigma) = encoder.encode(x_ref)?;
    (0..count)
        .map(|_| {
            let noise = rng.normals(mu.len());
            let z = RealArray::from_fn(mu.shape(), |i| mu.data()[i] + sigma.data()[i] * noise[i]);
            decoder.decode(&z)
        })
        .collect()
}

/// Mean of each image over the mask, one value per image.
pub fn masked_mean_series<'a>(images: impl IntoIterator<Item = &'a RealArray>, mask: &[bool]) -> Result<Vec<f64>> {
    let count = mask.iter().filter(|&&m| m).count();
    if count == 0 {
        return Err(Error::EmptyRegion);
    }
    images
        .into_iter()
        .map(|img| {
            if img.len() != mask.len() {
                return Err(Error::Shape(format!("image {:?} vs mask of {}", img.shape(), mask.len())));
            }
            Ok(img.data().iter().zip(mask).filter(|(_, &m)| m).map(|(v, _)| v).sum::<f64>() / count as f64)
        })
        .collect()
}
