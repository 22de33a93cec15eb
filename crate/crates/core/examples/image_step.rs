//! The image step: the Gaussian posterior mean of `x` given a latent and the data, compared
//! with the decoder output alone.

use std::sync::Arc;

use anyhow::Result;
use lmala::autodiff::RealMatrix;
use lmala::encoding::{build_encoding, generate_pattern_with_center, AcquisitionModel, CoilSensitivities, KSpaceData, NoiseCovariance};
use lmala::image_step::{decoder_only_sample, latent_to_image, latent_to_image_with, ImageRoute};
use lmala::metrics::{image_metrics, kspace_abs_error};
use lmala::numerics::{CgConfig, ComplexArray, LinearOperator, RealArray};
use lmala::phantom::{make_phantom, PhantomSpec};
use lmala::posterior::{PosteriorTarget, ScalePolicy};
use lmala::prior::{EmpiricalPrior, LinearDecoder};
use lmala::rng::ChainRng;
use num_complex::Complex64;

fn main() -> Result<()> {
    let n = 16;
    let ph = make_phantom(&PhantomSpec { size: n, ellipses: 4, coils: 2, seed: 3 })?;
    // A deliberately poor decoder: a blurred copy of the truth plus a few random directions.
    let mut rng = ChainRng::seed_from_u64(9);
    let blurred = RealArray::from_fn(&[n, n], |i| {
        let (r, c) = (i / n, i % n);
        let mut acc = 0.0;
        for (dr, dc) in [(0, 0), (1, 0), (0, 1), (n - 1, 0), (0, n - 1)] {
            acc += ph.image.data()[((r + dr) % n) * n + (c + dc) % n];
        }
        acc / 5.0
    });
    let d = 4;
    let weight = RealMatrix::new(n * n, d, rng.normals(n * n * d).into_iter().map(|v| 0.05 * v).collect())?;
    let decoder = LinearDecoder::new(weight, blurred, vec![d], 0.05)?;
    let model = AcquisitionModel {
        coils: CoilSensitivities::normalized(ph.coils.maps().clone())?,
        noise: NoiseCovariance::Isotropic(1e-4),
        ..AcquisitionModel::plain(generate_pattern_with_center(n, 2.0, 20, 0, 4)?, n, n)
    };
    let e = build_encoding(&model)?;
    let mut y = e.apply(&ph.image.to_complex())?;
    y.data_mut().iter_mut().for_each(|v| *v += Complex64::new(0.01 * rng.normal(), 0.01 * rng.normal()));
    let data = KSpaceData::new(y.clone(), model.pattern.clone(), model.noise.clone())?;
    let target = PosteriorTarget::new(
        Arc::new(decoder.clone()),
        Arc::new(EmpiricalPrior::standard(&[d])),
        &e,
        data,
        CgConfig::default(),
        ScalePolicy::Fixed(1.0),
    )?;

    let mask = vec![true; n * n];
    let z = RealArray::zeros(&[d]);
    let decoded: ComplexArray = decoder_only_sample(&decoder, &z)?;
    let stepped = latent_to_image(&target, &z)?;
    let kspace = latent_to_image_with(&target, &z, ImageRoute::KSpace, 0)?;
    for (name, x) in [("decoder only", &decoded), ("image step", &stepped.complex), ("k-space route", &kspace.complex)] {
        let m = image_metrics(&x.re(), &ph.image, &mask)?;
        println!(
            "{name:14} k-space |error| {:.4e}  RMSE {:6.2}%  pSNR {:5.2}",
            kspace_abs_error(x, &e, &y)?,
            m.rmse_percent,
            m.psnr
        );
    }
    Ok(())
}
