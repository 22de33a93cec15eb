mod common;

use std::sync::Arc;

use common::{LinearGaussian, LinearSpec};
use lmala::encoding::{
    build_encoding, estimate_noise_and_prewhiten, generate_pattern_with_center, sample_noise, AcquisitionModel,
    CoilCovariance, CoilSensitivities, KSpaceData, NoiseCovariance, NoiseRegion, PadSpec,
};
use lmala::numerics::{CgConfig, ComplexArray, LinearOperator, RealArray};
use lmala::posterior::{log_posterior_and_grad, map_estimate, PosteriorTarget, ScalePolicy};
use lmala::prior::{ConvArchitecture, ConvDecoder, Decoder, EmpiricalPrior};
use lmala::rng::ChainRng;
use num_complex::Complex64;

fn spec(seed: u64) -> LinearSpec {
    LinearSpec {
        size: 8,
        latent: 5,
        coils: 2,
        r: 2.0,
        central: 2,
        noise: 0.01,
        sigma_x: 0.2,
        weight_scale: 0.2,
        cg_iterations: 128,
        seed,
    }
}

#[test]
fn linear_decoder_gradient_is_the_gaussian_posterior_gradient() {
    for seed in 0..3 {
        let lg = LinearGaussian::new(&spec(seed));
        let (mean, cov) = lg.analytic_posterior();
        let prec = cov.try_inverse().unwrap();
        let mut rng = ChainRng::seed_from_u64(seed + 50);
        for _ in 0..3 {
            let z = RealArray::new(vec![5], rng.normals(5)).unwrap();
            let eval = log_posterior_and_grad(&lg.target, &z).unwrap();
            let zv = nalgebra::DVector::from_column_slice(z.data());
            let want = &prec * (&mean - zv);
            let scale = want.amax();
            for (g, w) in eval.grad.data().iter().zip(want.iter()) {
                assert!((g - w).abs() <= 1e-6 * scale, "seed {seed}: {g} vs {w}");
            }
        }
    }
}

#[test]
fn map_reaches_the_analytic_posterior_mean() {
    let lg = LinearGaussian::new(&spec(7));
    let (mean, _) = lg.analytic_posterior();
    let map = map_estimate(&lg.target, &RealArray::zeros(&[5]), 2000, 1e-3).unwrap();
    let err = map.z.data().iter().zip(mean.iter()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    assert!(err <= 1e-4, "‖z_MAP − mean‖∞ = {err}");
    assert!(map.trace.windows(2).all(|w| w[1] >= w[0]));
}

#[test]
fn prewhitening_preserves_log_posterior_differences() {
    let n = 16;
    let coils: usize = 3;
    let mut rng = ChainRng::seed_from_u64(21);
    let arch = ConvArchitecture { image: (n, n), latent_channels: 2, patch: 4, hidden: 4, sigma_x: 0.1 };
    let decoder = Arc::new(ConvDecoder::init(arch, &mut rng).unwrap());
    let cov: Vec<Complex64> = (0..coils * coils)
        .map(|k| Complex64::new(0.01 * 0.4f64.powi((k / coils).abs_diff(k % coils) as i32), 0.0))
        .collect();
    let noise = NoiseCovariance::Coil(CoilCovariance::new(coils, cov).unwrap());
    let maps = ComplexArray::from_fn(&[coils, n, n], |_| Complex64::new(rng.normal(), rng.normal()));
    let model = AcquisitionModel {
        pattern: generate_pattern_with_center(n, 2.0, 10, 3, 6).unwrap(),
        coils: CoilSensitivities::normalized(maps).unwrap(),
        bias: RealArray::from_fn(&[n, n], |_| 1.0),
        phase: ComplexArray::from_fn(&[n, n], |_| Complex64::new(1.0, 0.0)),
        pad: PadSpec::identity(n, n),
        scale: 1.0,
        noise: noise.clone(),
    };
    let e = build_encoding(&model).unwrap();
    let z_true = RealArray::from_fn(&decoder.latent_shape(), |_| rng.normal());
    let y = e.apply(&decoder.decode(&z_true).unwrap()).unwrap();
    let y = y.add(&sample_noise(&noise, y.shape(), &mut rng).unwrap()).unwrap();
    let raw = KSpaceData::new(y, model.pattern.clone(), noise).unwrap();
    let pw = estimate_noise_and_prewhiten(&raw, &model.coils, NoiseRegion { readout_fraction: 0.5 }).unwrap();

    // The same problem in raw units with the estimated covariance, and whitened.
    let estimated = NoiseCovariance::Coil(pw.estimated.clone());
    let raw = KSpaceData { noise: estimated.clone(), ..raw };
    let prior = Arc::new(EmpiricalPrior::standard(&decoder.latent_shape()));
    let cg = CgConfig::new(100).unwrap();
    let scale = ScalePolicy::Fixed(1.0);
    let unwhitened = PosteriorTarget::new(decoder.clone(), prior.clone(), &e, raw, cg, scale).unwrap();
    let wmodel = AcquisitionModel { coils: pw.coils.clone(), noise: NoiseCovariance::Isotropic(1.0), ..model };
    let whitened = PosteriorTarget::new(decoder.clone(), prior, &build_encoding(&wmodel).unwrap(), pw.data, cg, scale).unwrap();

    for _ in 0..4 {
        let z1 = RealArray::from_fn(&decoder.latent_shape(), |_| rng.normal());
        let z2 = RealArray::from_fn(&decoder.latent_shape(), |_| rng.normal());
        let d = |t: &PosteriorTarget| log_posterior_and_grad(t, &z1).unwrap().log_post - log_posterior_and_grad(t, &z2).unwrap().log_post;
        let (a, b) = (d(&unwhitened), d(&whitened));
        assert!((a - b).abs() <= 1e-6 * a.abs().max(1.0), "{a} vs {b}");
    }
}
