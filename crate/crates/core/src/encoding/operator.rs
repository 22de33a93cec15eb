//! The encoding operator `E = U·F·S·B·φ·P·s`, its fully sampled variant `E_F`, and the
//! normal operator `Σx⁻¹ + EᴴΣns⁻¹E` used by the likelihood.

use std::sync::Arc;

use num_complex::Complex64;

use super::{AcquisitionModel, KSpaceData, NoiseCovariance, PadSpec};
use crate::error::{Error, Result};
use crate::numerics::{vdot, ComplexArray, Fft2, LinearOperator};

#[derive(Debug)]
struct Parts {
    fft: Fft2,
    coils: Vec<Complex64>,
    n_coils: usize,
    /// `B ⊙ φ` on the padded grid.
    modulation: Vec<Complex64>,
    pad: PadSpec,
    lines: Vec<usize>,
}

/// Matrix-free `E` (or `E_F` when not undersampled) with a cheap scale override.
#[derive(Clone, Debug)]
pub struct Encoding {
    parts: Arc<Parts>,
    scale: f64,
    undersampled: bool,
}

/// Builds the undersampled encoding `E`; call [`Encoding::fully_sampled`] for `E_F`.
pub fn build_encoding(model: &AcquisitionModel) -> Result<Encoding> {
    model.validate()?;
    let (hp, wp) = model.pad.padded;
    let modulation = model
        .bias
        .data()
        .iter()
        .zip(model.phase.data())
        .map(|(&b, &p)| p * b)
        .collect();
    Ok(Encoding {
        parts: Arc::new(Parts {
            fft: Fft2::new(hp, wp),
            coils: model.coils.maps().data().to_vec(),
            n_coils: model.coils.coils(),
            modulation,
            pad: model.pad,
            lines: model.pattern.sampled_lines(),
        }),
        scale: model.scale,
        undersampled: true,
    })
}

impl Encoding {
    /// The same operator without the line selection `U`.
    pub fn fully_sampled(&self) -> Self {
        Self { undersampled: false, ..self.clone() }
    }

    /// The undersampled operator sharing this one's coils, bias, phase and scale.
    pub fn undersampled(&self) -> Self {
        Self { undersampled: true, ..self.clone() }
    }

    /// The same operator with `s` replaced.
    pub fn with_scale(&self, scale: f64) -> Self {
        Self { scale, ..self.clone() }
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn is_undersampled(&self) -> bool {
        self.undersampled
    }

    pub fn coils(&self) -> usize {
        self.parts.n_coils
    }

    pub fn sampled_lines(&self) -> &[usize] {
        &self.parts.lines
    }

    pub fn padded_shape(&self) -> (usize, usize) {
        self.parts.pad.padded
    }

    /// The bias field `B` cropped to the image grid.
    pub fn image_bias(&self) -> crate::numerics::RealArray {
        let p = &self.parts;
        let (h, w) = p.pad.image;
        let (r0, c0) = p.pad.offset;
        let wp = p.pad.padded.1;
        crate::numerics::RealArray::from_fn(&[h, w], |idx| p.modulation[(idx / w + r0) * wp + idx % w + c0].norm())
    }

    /// `U`: keeps the acquired rows of a `coils × Hp × Wp` k-space array.
    pub fn select_lines(&self, full: &[Complex64]) -> Vec<Complex64> {
        let (hp, wp) = self.parts.pad.padded;
        let mut out = Vec::with_capacity(self.parts.n_coils * self.parts.lines.len() * wp);
        for c in 0..self.parts.n_coils {
            for &l in &self.parts.lines {
                let start = c * hp * wp + l * wp;
                out.extend_from_slice(&full[start..start + wp]);
            }
        }
        out
    }

    /// `Uᴴ`: zero-fills the unacquired rows.
    pub fn zero_fill(&self, measured: &[Complex64]) -> Vec<Complex64> {
        let (hp, wp) = self.parts.pad.padded;
        let m = self.parts.lines.len();
        let mut out = vec![Complex64::new(0.0, 0.0); self.parts.n_coils * hp * wp];
        for c in 0..self.parts.n_coils {
            for (j, &l) in self.parts.lines.iter().enumerate() {
                let src = c * m * wp + j * wp;
                let dst = c * hp * wp + l * wp;
                out[dst..dst + wp].copy_from_slice(&measured[src..src + wp]);
            }
        }
        out
    }

    fn forward_full(&self, x: &[Complex64]) -> Vec<Complex64> {
        let p = &self.parts;
        let (hp, wp) = p.pad.padded;
        let (h, w) = p.pad.image;
        let (r0, c0) = p.pad.offset;
        let plane = hp * wp;
        let mut padded = vec![Complex64::new(0.0, 0.0); plane];
        for i in 0..h {
            for j in 0..w {
                let q = (i + r0) * wp + j + c0;
                padded[q] = x[i * w + j] * self.scale * p.modulation[q];
            }
        }
        let mut out = vec![Complex64::new(0.0, 0.0); p.n_coils * plane];
        out.chunks_mut(plane).enumerate().for_each(|(c, slice)| {
            let s = &p.coils[c * plane..(c + 1) * plane];
            slice.iter_mut().zip(s).zip(&padded).for_each(|((o, &sc), &v)| *o = sc * v);
        });
        p.fft.forward_inplace(&mut out);
        out
    }

    fn adjoint_full(&self, mut k: Vec<Complex64>) -> Vec<Complex64> {
        let p = &self.parts;
        let (hp, wp) = p.pad.padded;
        let (h, w) = p.pad.image;
        let (r0, c0) = p.pad.offset;
        let plane = hp * wp;
        p.fft.inverse_inplace(&mut k);
        let mut combined = vec![Complex64::new(0.0, 0.0); plane];
        for c in 0..p.n_coils {
            let s = &p.coils[c * plane..(c + 1) * plane];
            let kc = &k[c * plane..(c + 1) * plane];
            combined.iter_mut().zip(s).zip(kc).for_each(|((o, sc), &v)| *o += sc.conj() * v);
        }
        let mut x = vec![Complex64::new(0.0, 0.0); h * w];
        for i in 0..h {
            for j in 0..w {
                let q = (i + r0) * wp + j + c0;
                x[i * w + j] = combined[q] * p.modulation[q].conj() * self.scale;
            }
        }
        x
    }
}

impl LinearOperator for Encoding {
    fn domain_shape(&self) -> Vec<usize> {
        let (h, w) = self.parts.pad.image;
        vec![h, w]
    }

    fn codomain_shape(&self) -> Vec<usize> {
        let (hp, wp) = self.parts.pad.padded;
        let rows = if self.undersampled { self.parts.lines.len() } else { hp };
        vec![self.parts.n_coils, rows, wp]
    }

    fn apply_slice(&self, x: &[Complex64]) -> Vec<Complex64> {
        let full = self.forward_full(x);
        if self.undersampled {
            self.select_lines(&full)
        } else {
            full
        }
    }

    fn adjoint_slice(&self, y: &[Complex64]) -> Vec<Complex64> {
        let full = if self.undersampled { self.zero_fill(y) } else { y.to_vec() };
        self.adjoint_full(full)
    }
}

/// `A = Σx⁻¹·I + EᴴΣns⁻¹E` on the image domain, Hermitian positive definite.
#[derive(Clone, Debug)]
pub struct NormalOperator {
    encoding: Encoding,
    noise: NoiseCovariance,
    inv_sigma_x2: f64,
}

impl NormalOperator {
    pub fn new(encoding: Encoding, noise: NoiseCovariance, sigma_x: f64) -> Result<Self> {
        if !(sigma_x > 0.0 && sigma_x.is_finite()) {
            return Err(Error::InvalidArgument(format!("σx must be positive, got {sigma_x}")));
        }
        noise.validate(encoding.coils())?;
        Ok(Self { encoding, noise, inv_sigma_x2: 1.0 / (sigma_x * sigma_x) })
    }

    pub fn encoding(&self) -> &Encoding {
        &self.encoding
    }

    pub fn noise(&self) -> &NoiseCovariance {
        &self.noise
    }

    pub fn inv_sigma_x2(&self) -> f64 {
        self.inv_sigma_x2
    }
}

impl LinearOperator for NormalOperator {
    fn domain_shape(&self) -> Vec<usize> {
        self.encoding.domain_shape()
    }

    fn codomain_shape(&self) -> Vec<usize> {
        self.encoding.domain_shape()
    }

    fn apply_slice(&self, x: &[Complex64]) -> Vec<Complex64> {
        let mut k = self.encoding.apply_slice(x);
        self.noise.apply_inverse(&mut k, self.encoding.coils());
        let mut out = self.encoding.adjoint_slice(&k);
        out.iter_mut().zip(x).for_each(|(o, &v)| *o += v * self.inv_sigma_x2);
        out
    }

    fn adjoint_slice(&self, y: &[Complex64]) -> Vec<Complex64> {
        self.apply_slice(y)
    }
}

/// Closed-form `argmin_s ‖s·Eμx − y‖²`, i.e. `Re(μxᴴEᴴy) / ‖Eμx‖²`.
pub fn estimate_scale(mu_x: &ComplexArray, e: &dyn LinearOperator, y: &KSpaceData) -> Result<f64> {
    let emu = e.apply(mu_x)?;
    if emu.len() != y.samples.len() {
        return Err(Error::Shape(format!("E μx has {} entries, y has {}", emu.len(), y.samples.len())));
    }
    let denom = emu.data().iter().map(|v| v.norm_sqr()).sum::<f64>();
    let s = vdot(emu.data(), y.samples.data()).re / denom;
    if denom == 0.0 || !s.is_finite() || s <= 0.0 {
        return Err(Error::DegenerateScale);
    }
    Ok(s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoding::{generate_pattern_with_center, CoilSensitivities, UndersamplingPattern};
    use crate::numerics::{adjoint_dot_test, fft2_centered, RealArray};
    use crate::rng::ChainRng;

    fn random_complex(shape: &[usize], rng: &mut ChainRng) -> ComplexArray {
        ComplexArray::from_fn(shape, |_| Complex64::new(rng.normal(), rng.normal()))
    }

    fn random_model(seed: u64) -> AcquisitionModel {
        let mut rng = ChainRng::seed_from_u64(seed);
        let (h, w, hp, wp) = (10, 8, 16, 12);
        let coils = CoilSensitivities::normalized(random_complex(&[3, hp, wp], &mut rng)).unwrap();
        AcquisitionModel {
            pattern: generate_pattern_with_center(hp, 2.0, 4, seed, 4).unwrap(),
            coils,
            bias: RealArray::from_fn(&[hp, wp], |_| 0.8 + 0.4 * rng.uniform()),
            phase: ComplexArray::from_fn(&[hp, wp], |_| Complex64::from_polar(1.0, 6.0 * rng.uniform())),
            pad: PadSpec::centered((h, w), (hp, wp)).unwrap(),
            scale: 1.7,
            noise: NoiseCovariance::Isotropic(0.3),
        }
    }

    #[test]
    fn zero_maps_to_zero() {
        let e = build_encoding(&random_model(1)).unwrap();
        let y = e.apply(&ComplexArray::zeros(&[10, 8])).unwrap();
        assert!(y.data().iter().all(|v| *v == Complex64::new(0.0, 0.0)));
    }

    #[test]
    fn degenerate_model_is_the_fft() {
        let mut rng = ChainRng::seed_from_u64(2);
        let model = AcquisitionModel::plain(UndersamplingPattern::full(6), 6, 5);
        let e = build_encoding(&model).unwrap();
        let x = random_complex(&[6, 5], &mut rng);
        let ex = e.apply(&x).unwrap();
        let fx = fft2_centered(&x).unwrap();
        assert_eq!(ex.shape(), &[1, 6, 5]);
        for (a, b) in ex.data().iter().zip(fx.data()) {
            assert!((a - b).norm() <= 1e-14);
        }
    }

    #[test]
    fn adjoints_pass_dot_tests() {
        for seed in 0..4 {
            let e = build_encoding(&random_model(seed)).unwrap();
            assert!(adjoint_dot_test(&e, 5, seed) <= 1e-10);
            assert!(adjoint_dot_test(&e.fully_sampled(), 5, seed) <= 1e-10);
            let a = NormalOperator::new(e, NoiseCovariance::Isotropic(0.5), 0.1).unwrap();
            assert!(adjoint_dot_test(&a, 5, seed) <= 1e-10);
        }
    }

    #[test]
    fn undersampling_composes_with_full_encoding() {
        let mut rng = ChainRng::seed_from_u64(3);
        let e = build_encoding(&random_model(3)).unwrap();
        let x = random_complex(&[10, 8], &mut rng);
        let full = e.fully_sampled().apply(&x).unwrap();
        assert_eq!(e.apply(&x).unwrap().data(), e.select_lines(full.data()).as_slice());
    }

    #[test]
    fn rejects_bad_phase_and_shapes() {
        let mut m = random_model(4);
        m.phase.data_mut()[0] = Complex64::new(0.5, 0.0);
        assert!(matches!(build_encoding(&m), Err(Error::InvalidArgument(_))));
        let mut m = random_model(4);
        m.bias = RealArray::zeros(&[3, 3]);
        assert!(matches!(build_encoding(&m), Err(Error::Shape(_))));
    }

    fn golden_section(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64) -> f64 {
        let g = (5f64.sqrt() - 1.0) / 2.0;
        while b - a > 1e-10 {
            let (c, d) = (b - g * (b - a), a + g * (b - a));
            if f(c) < f(d) {
                b = d;
            } else {
                a = c;
            }
        }
        0.5 * (a + b)
    }

    #[test]
    fn scale_closed_form() {
        let mut rng = ChainRng::seed_from_u64(6);
        let model = random_model(6);
        let e = build_encoding(&model).unwrap();
        let mu = random_complex(&[10, 8], &mut rng);
        let emu = e.apply(&mu).unwrap();
        let data = |s: ComplexArray| KSpaceData::new(s, model.pattern.clone(), model.noise.clone()).unwrap();
        assert!((estimate_scale(&mu, &e, &data(emu.clone())).unwrap() - 1.0).abs() < 1e-12);
        assert!((estimate_scale(&mu, &e, &data(emu.scale(Complex64::new(2.0, 0.0)))).unwrap() - 2.0).abs() < 1e-12);

        let noise = random_complex(emu.shape(), &mut rng);
        let y = data(emu.scale(Complex64::new(0.7, 0.0)).add(&noise).unwrap());
        let s = estimate_scale(&mu, &e, &y).unwrap();
        let misfit = |s: f64| emu.scale(Complex64::new(s, 0.0)).sub(&y.samples).unwrap().norm();
        assert!((s - golden_section(misfit, 0.0, 5.0)).abs() <= 1e-6);
    }

    #[test]
    fn zero_mean_is_degenerate() {
        let model = random_model(7);
        let e = build_encoding(&model).unwrap();
        let y = KSpaceData::new(
            ComplexArray::zeros(&e.codomain_shape()),
            model.pattern.clone(),
            model.noise.clone(),
        )
        .unwrap();
        assert!(matches!(estimate_scale(&ComplexArray::zeros(&[10, 8]), &e, &y), Err(Error::DegenerateScale)));
    }
}
