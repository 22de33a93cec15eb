//! Measurement noise covariance, its estimation from k-space, and pre-whitening.
//!
//! Variances refer to each of the real and imaginary parts, so complex noise with
//! covariance `Σ` has `E[ηηᴴ] = 2Σ` and log-density `−½ ηᴴΣ⁻¹η + const`.

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::{CoilSensitivities, KSpaceData};
use crate::error::{Error, Result};
use crate::numerics::ComplexArray;

/// Noise covariance across coils, identical for every k-space voxel.
#[derive(Clone, Debug, PartialEq)]
pub enum NoiseCovariance {
    Isotropic(f64),
    Coil(CoilCovariance),
}

/// A Hermitian positive definite `coils × coils` covariance with cached factors.
#[derive(Clone, Debug, PartialEq)]
pub struct CoilCovariance {
    cov: DMatrix<Complex64>,
    inv: DMatrix<Complex64>,
    whitening: DMatrix<Complex64>,
}

impl CoilCovariance {
    /// Row-major `n × n` covariance.
    pub fn new(n: usize, data: Vec<Complex64>) -> Result<Self> {
        if n == 0 || data.len() != n * n {
            return Err(Error::Shape(format!("coil covariance needs {} entries, got {}", n * n, data.len())));
        }
        let cov = DMatrix::from_row_slice(n, n, &data);
        if (&cov - cov.adjoint()).norm() > 1e-10 * cov.norm() {
            return Err(Error::InvalidArgument("coil covariance is not Hermitian".into()));
        }
        let chol = cov
            .clone()
            .cholesky()
            .ok_or_else(|| Error::InvalidArgument("coil covariance is not positive definite".into()))?;
        let inv = chol.inverse();
        let whitening = chol
            .l()
            .try_inverse()
            .ok_or_else(|| Error::InvalidArgument("singular Cholesky factor".into()))?;
        Ok(Self { cov, inv, whitening })
    }

    pub fn coils(&self) -> usize {
        self.cov.nrows()
    }

    pub fn matrix(&self) -> Vec<Complex64> {
        row_major(&self.cov)
    }

    /// `L⁻¹` where `Σ = LLᴴ`, row-major.
    pub fn whitening(&self) -> Vec<Complex64> {
        row_major(&self.whitening)
    }
}

fn row_major(m: &DMatrix<Complex64>) -> Vec<Complex64> {
    m.transpose().as_slice().to_vec()
}

impl NoiseCovariance {
    pub fn validate(&self, coils: usize) -> Result<()> {
        match self {
            Self::Isotropic(v) if !(*v > 0.0 && v.is_finite()) => {
                Err(Error::InvalidArgument(format!("noise variance must be positive, got {v}")))
            }
            Self::Coil(c) if c.coils() != coils => {
                Err(Error::Shape(format!("noise covariance for {} coils, data has {coils}", c.coils())))
            }
            _ => Ok(()),
        }
    }

    /// Dense `coils × coils` matrix, row-major.
    pub fn matrix(&self, coils: usize) -> Vec<Complex64> {
        match self {
            Self::Isotropic(v) => {
                let mut m = vec![Complex64::new(0.0, 0.0); coils * coils];
                (0..coils).for_each(|i| m[i * coils + i] = Complex64::new(*v, 0.0));
                m
            }
            Self::Coil(c) => c.matrix(),
        }
    }

    /// Multiplies every voxel's coil vector by `Σ⁻¹`; `data` is coil-major.
    pub fn apply_inverse(&self, data: &mut [Complex64], coils: usize) {
        match self {
            Self::Isotropic(v) => data.iter_mut().for_each(|x| *x /= *v),
            Self::Coil(c) => mix_coils(&c.inv, data, coils),
        }
    }

    /// Multiplies every voxel's coil vector by the whitening transform.
    pub fn apply_whitening(&self, data: &mut [Complex64], coils: usize) {
        match self {
            Self::Isotropic(v) => data.iter_mut().for_each(|x| *x /= v.sqrt()),
            Self::Coil(c) => mix_coils(&c.whitening, data, coils),
        }
    }
}

fn mix_coils(m: &DMatrix<Complex64>, data: &mut [Complex64], coils: usize) {
    let voxels = data.len() / coils;
    let mut buf = vec![Complex64::new(0.0, 0.0); coils];
    for v in 0..voxels {
        for (i, b) in buf.iter_mut().enumerate() {
            *b = (0..coils).map(|j| m[(i, j)] * data[j * voxels + v]).sum();
        }
        for (i, b) in buf.iter().enumerate() {
            data[i * voxels + v] = *b;
        }
    }
}

/// Noise samples are taken from the acquired central lines, over the leading
/// `readout_fraction` of the readout axis (the high-frequency edge).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseRegion {
    pub readout_fraction: f64,
}

impl Default for NoiseRegion {
    fn default() -> Self {
        Self { readout_fraction: 150.0 / 308.0 }
    }
}

/// Whitened data and coil maps together with the estimate that produced them.
#[derive(Clone, Debug)]
pub struct Prewhitened {
    pub data: KSpaceData,
    pub coils: CoilSensitivities,
    pub estimated: CoilCovariance,
    pub region_samples: usize,
}

/// Estimates the cross-coil noise covariance from the noise region and whitens data and
/// coil maps so the residual noise covariance is the identity.
pub fn estimate_noise_and_prewhiten(
    raw: &KSpaceData,
    coils: &CoilSensitivities,
    region: NoiseRegion,
) -> Result<Prewhitened> {
    let (c, m, w) = (raw.samples.shape()[0], raw.samples.shape()[1], raw.samples.shape()[2]);
    if coils.coils() != c {
        return Err(Error::Shape(format!("{} coil maps for {c}-coil data", coils.coils())));
    }
    let cols = ((region.readout_fraction.clamp(0.0, 1.0) * w as f64).round() as usize).min(w);
    let central = raw.pattern.central_lines();
    let rows: Vec<usize> = raw
        .pattern
        .sampled_lines()
        .iter()
        .enumerate()
        .filter(|(_, l)| central.contains(l))
        .map(|(j, _)| j)
        .collect();
    let n = rows.len() * cols;
    if n == 0 {
        return Err(Error::EmptyRegion);
    }
    if n < c {
        return Err(Error::Rank { required: c, got: n });
    }
    let y = raw.samples.data();
    let mut acc = DMatrix::<Complex64>::zeros(c, c);
    for &r in &rows {
        for col in 0..cols {
            let v = nalgebra::DVector::from_fn(c, |k, _| y[k * m * w + r * w + col]);
            acc += &v * v.adjoint();
        }
    }
    acc /= Complex64::new(2.0 * n as f64, 0.0);
    let hermitian = (&acc + acc.adjoint()) * Complex64::new(0.5, 0.0);
    let estimated = CoilCovariance::new(c, row_major(&hermitian)).map_err(|_| Error::Rank { required: c, got: n })?;
    let cov = NoiseCovariance::Coil(estimated.clone());

    let mut samples = raw.samples.clone();
    cov.apply_whitening(samples.data_mut(), c);
    let mut maps = coils.maps().clone();
    cov.apply_whitening(maps.data_mut(), c);
    Ok(Prewhitened {
        data: KSpaceData::new(samples, raw.pattern.clone(), NoiseCovariance::Isotropic(1.0))?,
        coils: CoilSensitivities::whitened(maps),
        estimated,
        region_samples: n,
    })
}

/// Draws complex noise whose real and imaginary parts have covariance `Σ` across coils.
pub fn sample_noise(
    cov: &NoiseCovariance,
    shape: &[usize],
    rng: &mut crate::rng::ChainRng,
) -> Result<ComplexArray> {
    let coils = shape[0];
    cov.validate(coils)?;
    let mut out = ComplexArray::from_fn(shape, |_| Complex64::new(rng.normal(), rng.normal()));
    match cov {
        NoiseCovariance::Isotropic(v) => out.data_mut().iter_mut().for_each(|x| *x *= v.sqrt()),
        NoiseCovariance::Coil(c) => {
            let l = c.cov.clone().cholesky().expect("validated at construction").l();
            mix_coils(&l, out.data_mut(), coils);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoding::{generate_pattern_with_center, UndersamplingPattern};
    use crate::rng::ChainRng;

    fn noisy_data(cov: &NoiseCovariance, coils: usize, seed: u64) -> (KSpaceData, CoilSensitivities) {
        let pattern = UndersamplingPattern::full(40).with_central(40).unwrap();
        let mut rng = ChainRng::seed_from_u64(seed);
        let samples = sample_noise(cov, &[coils, 40, 64], &mut rng).unwrap();
        let maps = CoilSensitivities::normalized(ComplexArray::from_fn(&[coils, 40, 64], |i| {
            Complex64::new(1.0 + (i % 7) as f64, 0.5)
        }))
        .unwrap();
        (KSpaceData::new(samples, pattern, cov.clone()).unwrap(), maps)
    }

    #[test]
    fn unit_white_noise_is_estimated() {
        let (data, maps) = noisy_data(&NoiseCovariance::Isotropic(1.0), 1, 1);
        let out = estimate_noise_and_prewhiten(&data, &maps, NoiseRegion { readout_fraction: 0.5 }).unwrap();
        assert!(out.region_samples >= 1000);
        assert!((out.estimated.matrix()[0].re - 1.0).abs() < 0.1);
    }

    #[test]
    fn white_data_gives_near_identity_whitening() {
        let (data, maps) = noisy_data(&NoiseCovariance::Isotropic(1.0), 3, 2);
        let out = estimate_noise_and_prewhiten(&data, &maps, NoiseRegion { readout_fraction: 1.0 }).unwrap();
        let w = out.estimated.whitening();
        let dist: f64 = (0..3)
            .flat_map(|i| (0..3).map(move |j| (i, j)))
            .map(|(i, j)| (w[i * 3 + j] - if i == j { 1.0 } else { 0.0 }).norm_sqr())
            .sum::<f64>()
            .sqrt();
        assert!(dist <= 0.05 * 3f64.sqrt(), "{dist}");
    }

    #[test]
    fn correlated_coils_are_decorrelated() {
        let half = Complex64::new(0.5, 0.0);
        let one = Complex64::new(1.0, 0.0);
        let cov = NoiseCovariance::Coil(CoilCovariance::new(2, vec![one, half, half, one]).unwrap());
        let (data, maps) = noisy_data(&cov, 2, 3);
        let out = estimate_noise_and_prewhiten(&data, &maps, NoiseRegion { readout_fraction: 0.5 }).unwrap();
        let y = out.data.samples.data();
        let n = y.len() / 2;
        let (a, b) = (&y[..n], &y[n..]);
        let cross: Complex64 = a.iter().zip(b).map(|(u, v)| u * v.conj()).sum();
        let ea: f64 = a.iter().map(|v| v.norm_sqr()).sum();
        let eb: f64 = b.iter().map(|v| v.norm_sqr()).sum();
        assert!(cross.norm() / (ea * eb).sqrt() <= 0.05);
        assert!(out.coils.is_whitened());
    }

    #[test]
    fn empty_region_is_an_error() {
        let (data, maps) = noisy_data(&NoiseCovariance::Isotropic(1.0), 1, 4);
        let r = estimate_noise_and_prewhiten(&data, &maps, NoiseRegion { readout_fraction: 0.0 });
        assert!(matches!(r, Err(Error::EmptyRegion)));
    }

    #[test]
    fn region_uses_only_central_lines() {
        let pattern = generate_pattern_with_center(32, 2.0, 3, 9, 4).unwrap();
        let m = pattern.sampled_count();
        let samples = ComplexArray::from_fn(&[1, m, 10], |_| Complex64::new(1.0, 0.0));
        let data = KSpaceData::new(samples, pattern, NoiseCovariance::Isotropic(1.0)).unwrap();
        let out = estimate_noise_and_prewhiten(&data, &CoilSensitivities::uniform(32, 10), NoiseRegion { readout_fraction: 0.5 })
            .unwrap();
        assert_eq!(out.region_samples, 4 * 5);
    }

    #[test]
    fn rejects_non_hermitian() {
        let z = Complex64::new(0.0, 0.0);
        let one = Complex64::new(1.0, 0.0);
        assert!(CoilCovariance::new(2, vec![one, one, z, one]).is_err());
    }
}
