//! Independent dense oracles shared by the integration tests.
#![allow(dead_code)]

use std::sync::Arc;

use lmala::autodiff::RealMatrix;
use lmala::encoding::{
    build_encoding, generate_pattern_with_center, AcquisitionModel, CoilSensitivities, Encoding, KSpaceData,
    NoiseCovariance, PadSpec,
};
use lmala::numerics::{CgConfig, ComplexArray, LinearOperator, RealArray};
use lmala::posterior::{PosteriorTarget, ScalePolicy};
use lmala::prior::{Decoder, EmpiricalPrior, LinearDecoder};
use lmala::rng::ChainRng;
use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

pub type CMat = DMatrix<Complex64>;

pub fn c(re: f64) -> Complex64 {
    Complex64::new(re, 0.0)
}

/// Materializes an operator column by column from unit vectors.
pub fn dense(op: &dyn LinearOperator) -> CMat {
    let (n, m) = (op.domain_len(), op.codomain_len());
    let mut out = CMat::zeros(m, n);
    for j in 0..n {
        let mut unit = vec![c(0.0); n];
        unit[j] = c(1.0);
        out.set_column(j, &DVector::from_vec(op.apply_slice(&unit)));
    }
    out
}

pub fn cvec(a: &ComplexArray) -> DVector<Complex64> {
    DVector::from_column_slice(a.data())
}

/// Per-part noise covariance of the data, block-diagonal over k-space locations.
pub fn dense_noise(noise: &NoiseCovariance, coils: usize, m: usize) -> CMat {
    let per_coil = m / coils;
    let cov = noise.matrix(coils);
    CMat::from_fn(m, m, |i, j| if i % per_coil == j % per_coil { cov[(i / per_coil) * coils + j / per_coil] } else { c(0.0) })
}

/// `log N(y; Eμ, σx²EEᴴ + Σns)` with per-part covariances: `−½rᴴC⁻¹r − log det C`.
pub fn dense_log_marginal(e: &CMat, mu: &DVector<Complex64>, y: &DVector<Complex64>, sigma_x: f64, noise: &CMat) -> f64 {
    let cov = e * e.adjoint() * c(sigma_x * sigma_x) + noise;
    let r = y - e * mu;
    let chol = cov.cholesky().expect("marginal covariance is SPD");
    let quad = (r.adjoint() * chol.solve(&r))[(0, 0)].re;
    let logdet: f64 = 2.0 * chol.l().diagonal().iter().map(|d| d.re.ln()).sum::<f64>();
    -0.5 * quad - logdet
}

/// `(Σx⁻¹ + EᴴΣns⁻¹E)⁻¹(Σx⁻¹μ + EᴴΣns⁻¹y)` by dense LU.
pub fn dense_image_mean(e: &CMat, mu: &DVector<Complex64>, y: &DVector<Complex64>, sigma_x: f64, noise: &CMat) -> DVector<Complex64> {
    let ninv = noise.clone().try_inverse().expect("invertible noise");
    let inv_var = c(1.0 / (sigma_x * sigma_x));
    let a = CMat::identity(e.ncols(), e.ncols()) * inv_var + e.adjoint() * &ninv * e;
    let rhs = mu * inv_var + e.adjoint() * &ninv * y;
    a.lu().solve(&rhs).expect("invertible normal matrix")
}

/// Linear decoder, random coils, bias and phase, standard-normal prior and simulated data.
pub struct LinearGaussian {
    pub target: PosteriorTarget,
    pub decoder: LinearDecoder,
    pub encoding: Encoding,
    pub data: KSpaceData,
    pub z_true: RealArray,
}

pub struct LinearSpec {
    pub size: usize,
    pub latent: usize,
    pub coils: usize,
    pub r: f64,
    pub central: usize,
    pub noise: f64,
    pub sigma_x: f64,
    pub weight_scale: f64,
    pub cg_iterations: usize,
    pub seed: u64,
}

impl LinearGaussian {
    pub fn new(s: &LinearSpec) -> Self {
        let n = s.size;
        let mut rng = ChainRng::seed_from_u64(s.seed);
        let weight = RealMatrix::new(n * n, s.latent, rng.normals(n * n * s.latent).into_iter().map(|v| s.weight_scale * v).collect())
            .unwrap();
        let offset = RealArray::from_fn(&[n, n], |_| 0.5 + 0.1 * rng.normal());
        let decoder = LinearDecoder::new(weight, offset, vec![s.latent], s.sigma_x).unwrap();
        let maps = ComplexArray::from_fn(&[s.coils, n, n], |_| Complex64::new(rng.normal(), rng.normal()));
        let model = AcquisitionModel {
            pattern: generate_pattern_with_center(n, s.r, 20, s.seed, s.central).unwrap(),
            coils: CoilSensitivities::normalized(maps).unwrap(),
            bias: RealArray::from_fn(&[n, n], |_| 0.8 + 0.4 * rng.uniform()),
            phase: ComplexArray::from_fn(&[n, n], |_| Complex64::from_polar(1.0, 0.3 * rng.normal())),
            pad: PadSpec::identity(n, n),
            scale: 1.0,
            noise: NoiseCovariance::Isotropic(s.noise),
        };
        let encoding = build_encoding(&model).unwrap();
        let z_true = RealArray::new(vec![s.latent], rng.normals(s.latent)).unwrap();
        let mut y = encoding.apply(&decoder.decode(&z_true).unwrap()).unwrap();
        let sd = s.noise.sqrt();
        y.data_mut().iter_mut().for_each(|v| *v += Complex64::new(sd * rng.normal(), sd * rng.normal()));
        let data = KSpaceData::new(y, model.pattern.clone(), model.noise.clone()).unwrap();
        let target = PosteriorTarget::new(
            Arc::new(decoder.clone()),
            Arc::new(EmpiricalPrior::standard(&[s.latent])),
            &encoding,
            data.clone(),
            CgConfig::new(s.cg_iterations).unwrap(),
            ScalePolicy::Fixed(1.0),
        )
        .unwrap();
        Self { target, decoder, encoding, data, z_true }
    }

    /// Gaussian posterior over `z` with an `N(0, I)` prior: precision `I + Re(GᴴC⁻¹G)` with
    /// `G = EW` and `C = σx²EEᴴ + Σns`; mean solves `Λm = Re(GᴴC⁻¹(y − Eb))`.
    pub fn analytic_posterior(&self) -> (DVector<f64>, DMatrix<f64>) {
        let e = dense(&self.encoding);
        let w = self.decoder.weight();
        let wm = DMatrix::from_fn(w.rows(), w.cols(), |i, j| c(w.get(i, j)));
        let g = &e * wm;
        let m = e.nrows();
        let noise = dense_noise(&self.data.noise, self.encoding.coils(), m);
        let sx = self.decoder.sigma_x();
        let cinv = (&e * e.adjoint() * c(sx * sx) + noise).try_inverse().unwrap();
        let b = DVector::from_iterator(self.decoder.offset().len(), self.decoder.offset().data().iter().map(|&v| c(v)));
        let r = cvec(&self.data.samples) - &e * b;
        let d = w.cols();
        let prec = DMatrix::<f64>::identity(d, d) + (g.adjoint() * &cinv * &g).map(|v| v.re);
        let rhs = (g.adjoint() * &cinv * r).map(|v| v.re);
        let cov = prec.try_inverse().unwrap();
        (&cov * rhs, cov)
    }
}

/// Random Hermitian positive-definite `n × n` matrix with condition number about `cond`.
pub fn spd(n: usize, cond: f64, seed: u64) -> CMat {
    let mut rng = ChainRng::seed_from_u64(seed);
    let g = CMat::from_fn(n, n, |_, _| Complex64::new(rng.normal(), rng.normal()));
    let q = g.qr().q();
    let d = DMatrix::from_fn(n, n, |i, j| if i == j { c(cond.powf(i as f64 / (n - 1) as f64)) } else { c(0.0) });
    let a = &q * d * q.adjoint();
    (&a + a.adjoint()) * c(0.5)
}
