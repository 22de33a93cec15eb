//! The MR acquisition model: coils, bias, phase, padding, scale and Cartesian line sampling.

mod noise;
mod operator;
mod pattern;

pub use noise::{estimate_noise_and_prewhiten, sample_noise, CoilCovariance, NoiseCovariance, NoiseRegion, Prewhitened};
pub use operator::{build_encoding, estimate_scale, Encoding, NormalOperator};
pub use pattern::{generate_pattern, generate_pattern_with_center, peak_to_side_ratio, UndersamplingPattern, CENTRAL_LINES};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{ComplexArray, RealArray};

/// Receiver coil maps of shape `coils × H × W` on the padded grid.
#[derive(Clone, Debug)]
pub struct CoilSensitivities {
    maps: ComplexArray,
    whitened: bool,
}

impl CoilSensitivities {
    /// Wraps maps that already satisfy `Σ_c |S_c(p)|² = 1` wherever any coil is nonzero.
    pub fn new(maps: ComplexArray) -> Result<Self> {
        check_coil_shape(&maps)?;
        let (c, plane) = (maps.shape()[0], maps.shape()[1] * maps.shape()[2]);
        for p in 0..plane {
            let energy: f64 = (0..c).map(|k| maps.data()[k * plane + p].norm_sqr()).sum();
            if energy != 0.0 && (energy - 1.0).abs() > 1e-8 {
                return Err(Error::InvalidArgument(format!(
                    "coil maps not normalized at pixel {p}: Σ|S|² = {energy}"
                )));
            }
        }
        Ok(Self { maps, whitened: false })
    }

    /// Divides every pixel by its root-sum-of-squares so that `SᴴS = I` on the support.
    pub fn normalized(mut maps: ComplexArray) -> Result<Self> {
        check_coil_shape(&maps)?;
        let (c, plane) = (maps.shape()[0], maps.shape()[1] * maps.shape()[2]);
        let data = maps.data_mut();
        for p in 0..plane {
            let rss: f64 = (0..c).map(|k| data[k * plane + p].norm_sqr()).sum::<f64>().sqrt();
            if rss > 0.0 {
                for k in 0..c {
                    data[k * plane + p] /= rss;
                }
            }
        }
        Ok(Self { maps, whitened: false })
    }

    /// Maps after a coil-mixing whitening transform; the normalization no longer holds.
    pub(crate) fn whitened(maps: ComplexArray) -> Self {
        Self { maps, whitened: true }
    }

    /// A single coil with unit sensitivity everywhere.
    pub fn uniform(height: usize, width: usize) -> Self {
        let maps = ComplexArray::from_fn(&[1, height, width], |_| Complex64::new(1.0, 0.0));
        Self { maps, whitened: false }
    }

    pub fn maps(&self) -> &ComplexArray {
        &self.maps
    }

    pub fn coils(&self) -> usize {
        self.maps.shape()[0]
    }

    pub fn grid(&self) -> (usize, usize) {
        (self.maps.shape()[1], self.maps.shape()[2])
    }

    pub fn is_whitened(&self) -> bool {
        self.whitened
    }
}

fn check_coil_shape(maps: &ComplexArray) -> Result<()> {
    if maps.shape().len() != 3 || maps.shape()[0] == 0 {
        return Err(Error::Shape(format!("coil maps must be coils × H × W, got {:?}", maps.shape())));
    }
    Ok(())
}

/// Zero-padding `P` of an `H × W` image into a larger grid; `Pᴴ` crops.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PadSpec {
    pub image: (usize, usize),
    pub padded: (usize, usize),
    pub offset: (usize, usize),
}

impl PadSpec {
    pub fn identity(height: usize, width: usize) -> Self {
        Self { image: (height, width), padded: (height, width), offset: (0, 0) }
    }

    /// Centers the image in the padded grid.
    pub fn centered(image: (usize, usize), padded: (usize, usize)) -> Result<Self> {
        if padded.0 < image.0 || padded.1 < image.1 {
            return Err(Error::Shape(format!("cannot pad {image:?} into {padded:?}")));
        }
        Ok(Self { image, padded, offset: ((padded.0 - image.0) / 2, (padded.1 - image.1) / 2) })
    }

    fn validate(&self) -> Result<()> {
        let fits = self.offset.0 + self.image.0 <= self.padded.0 && self.offset.1 + self.image.1 <= self.padded.1;
        if !fits || self.image.0 == 0 || self.image.1 == 0 {
            return Err(Error::Shape(format!("invalid padding {self:?}")));
        }
        Ok(())
    }
}

/// Everything needed to build `E = U·F·S·B·φ·P·s`.
#[derive(Clone, Debug)]
pub struct AcquisitionModel {
    pub pattern: UndersamplingPattern,
    pub coils: CoilSensitivities,
    /// Positive multiplicative bias on the padded grid.
    pub bias: RealArray,
    /// Unit-modulus phase on the padded grid.
    pub phase: ComplexArray,
    pub pad: PadSpec,
    pub scale: f64,
    pub noise: NoiseCovariance,
}

impl AcquisitionModel {
    /// Single coil, no bias, no phase, no padding, unit scale and unit white noise.
    pub fn plain(pattern: UndersamplingPattern, height: usize, width: usize) -> Self {
        Self {
            pattern,
            coils: CoilSensitivities::uniform(height, width),
            bias: RealArray::from_fn(&[height, width], |_| 1.0),
            phase: ComplexArray::from_fn(&[height, width], |_| Complex64::new(1.0, 0.0)),
            pad: PadSpec::identity(height, width),
            scale: 1.0,
            noise: NoiseCovariance::Isotropic(1.0),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.pad.validate()?;
        let (hp, wp) = self.pad.padded;
        if self.coils.grid() != (hp, wp) {
            return Err(Error::Shape(format!("coil grid {:?} vs padded grid {:?}", self.coils.grid(), (hp, wp))));
        }
        if self.bias.shape() != [hp, wp] || self.phase.shape() != [hp, wp] {
            return Err(Error::Shape("bias and phase must live on the padded grid".into()));
        }
        if self.pattern.height() != hp {
            return Err(Error::Shape(format!("pattern height {} vs padded height {hp}", self.pattern.height())));
        }
        if let Some(p) = self.bias.data().iter().position(|&b| b <= 0.0) {
            return Err(Error::InvalidArgument(format!("bias must be positive, pixel {p} is {}", self.bias.data()[p])));
        }
        if let Some(p) = self.phase.data().iter().position(|v| (v.norm() - 1.0).abs() > 1e-10) {
            return Err(Error::InvalidArgument(format!("phase is not unit-modulus at pixel {p}")));
        }
        if !(self.scale > 0.0 && self.scale.is_finite()) {
            return Err(Error::InvalidArgument(format!("scale must be positive, got {}", self.scale)));
        }
        self.noise.validate(self.coils.coils())
    }
}

/// Measured lines `coils × M × W` together with the noise model they were recorded under.
#[derive(Clone, Debug)]
pub struct KSpaceData {
    pub samples: ComplexArray,
    pub pattern: UndersamplingPattern,
    pub noise: NoiseCovariance,
}

impl KSpaceData {
    pub fn new(samples: ComplexArray, pattern: UndersamplingPattern, noise: NoiseCovariance) -> Result<Self> {
        let s = samples.shape();
        if s.len() != 3 || s[1] != pattern.sampled_count() {
            return Err(Error::Shape(format!(
                "k-space samples {:?} do not match {} measured lines",
                s,
                pattern.sampled_count()
            )));
        }
        noise.validate(s[0])?;
        Ok(Self { samples, pattern, noise })
    }

    pub fn coils(&self) -> usize {
        self.samples.shape()[0]
    }
}
