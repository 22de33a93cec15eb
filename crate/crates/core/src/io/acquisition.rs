//! Simulated acquisitions with their ground truth, and their bundle form.

use std::path::Path;

use num_complex::Complex64;

use super::bundle::ArrayBundle;
use crate::encoding::{
    build_encoding, sample_noise, AcquisitionModel, CoilCovariance, CoilSensitivities, KSpaceData, NoiseCovariance,
    PadSpec, UndersamplingPattern,
};
use crate::error::{Error, Result};
use crate::numerics::LinearOperator;
use crate::phantom::Phantom;
use crate::rng::ChainRng;

/// Undersampled k-space stored beside the phantom it was simulated from.
#[derive(Clone, Debug)]
pub struct Acquisition {
    pub phantom: Phantom,
    pub model: AcquisitionModel,
    /// Raw (not whitened) measurements; `data.noise` is the covariance used to draw them.
    pub data: KSpaceData,
    pub noise_scale: f64,
}

/// `Σ[i][j] = σ₀²·ρ^|i−j|` across coils.
pub fn correlated_noise(sigma0: f64, rho: f64, coils: usize) -> Result<NoiseCovariance> {
    let m = (0..coils * coils)
        .map(|k| Complex64::new(sigma0 * sigma0 * rho.powi((k / coils).abs_diff(k % coils) as i32), 0.0))
        .collect();
    Ok(NoiseCovariance::Coil(CoilCovariance::new(coils, m)?))
}

fn scaled(cov: &NoiseCovariance, factor: f64, coils: usize) -> Result<NoiseCovariance> {
    Ok(match cov {
        NoiseCovariance::Isotropic(v) => NoiseCovariance::Isotropic(v * factor),
        NoiseCovariance::Coil(_) => {
            NoiseCovariance::Coil(CoilCovariance::new(coils, cov.matrix(coils).into_iter().map(|v| v * factor).collect())?)
        }
    })
}

/// `y = E x_true + η` with `η` drawn from `noise_scale² · base`.
///
/// With `noise_scale = 0` no noise is added and the data keep `base` as a nominal covariance.
pub fn simulate_acquisition(
    phantom: &Phantom,
    pattern: &UndersamplingPattern,
    noise_scale: f64,
    base: &NoiseCovariance,
    seed: u64,
) -> Result<Acquisition> {
    if !(noise_scale >= 0.0 && noise_scale.is_finite()) {
        return Err(Error::InvalidArgument(format!("noise scale must be ≥ 0, got {noise_scale}")));
    }
    let (h, w) = (phantom.image.shape()[0], phantom.image.shape()[1]);
    let coils = phantom.coils.coils();
    let noise = if noise_scale > 0.0 { scaled(base, noise_scale * noise_scale, coils)? } else { base.clone() };
    let model = AcquisitionModel {
        pattern: pattern.clone(),
        coils: phantom.coils.clone(),
        bias: phantom.bias.clone(),
        phase: phantom.phase.clone(),
        pad: PadSpec::identity(h, w),
        scale: 1.0,
        noise: noise.clone(),
    };
    let e = build_encoding(&model)?;
    let mut y = e.apply(&phantom.image.to_complex())?;
    if noise_scale > 0.0 {
        let eta = sample_noise(&noise, y.shape(), &mut ChainRng::seed_from_u64(seed))?;
        y = y.add(&eta)?;
    }
    let data = KSpaceData::new(y, pattern.clone(), noise)?;
    Ok(Acquisition { phantom: phantom.clone(), model, data, noise_scale })
}

impl Acquisition {
    pub fn write(&self, dir: &Path) -> Result<()> {
        let mut b = ArrayBundle::new();
        let coils = self.phantom.coils.coils();
        b.insert_real("image", self.phantom.image.clone())?;
        b.insert_complex("coils", self.phantom.coils.maps().clone())?;
        b.insert_real("bias", self.phantom.bias.clone())?;
        b.insert_complex("phase", self.phantom.phase.clone())?;
        b.insert_complex("kspace", self.data.samples.clone())?;
        b.insert_bool("mask", vec![self.model.pattern.height()], self.model.pattern.mask().to_vec())?;
        b.insert_complex(
            "noise_covariance",
            crate::numerics::ComplexArray::new(vec![coils, coils], self.data.noise.matrix(coils))?,
        )?;
        b.set_meta("pattern", &self.model.pattern)?;
        b.set_meta("noise_scale", &self.noise_scale)?;
        b.write(dir)
    }

    pub fn read(dir: &Path) -> Result<Self> {
        let b = ArrayBundle::read(dir)?;
        let pattern: UndersamplingPattern = b.meta("pattern")?;
        let coils = CoilSensitivities::new(b.complex("coils")?.clone())?;
        let cov = b.complex("noise_covariance")?;
        let noise = NoiseCovariance::Coil(CoilCovariance::new(coils.coils(), cov.data().to_vec())?);
        let phantom = Phantom {
            image: b.real("image")?.clone(),
            coils,
            bias: b.real("bias")?.clone(),
            phase: b.complex("phase")?.clone(),
        };
        let (h, w) = (phantom.image.shape()[0], phantom.image.shape()[1]);
        let model = AcquisitionModel {
            pattern: pattern.clone(),
            coils: phantom.coils.clone(),
            bias: phantom.bias.clone(),
            phase: phantom.phase.clone(),
            pad: PadSpec::identity(h, w),
            scale: 1.0,
            noise: noise.clone(),
        };
        model.validate()?;
        let data = KSpaceData::new(b.complex("kspace")?.clone(), pattern, noise)?;
        Ok(Self { phantom, model, data, noise_scale: b.meta("noise_scale")? })
    }
}
