//! Latent MAP by backtracking gradient ascent, compared with the closed-form posterior mean
//! of a linear-Gaussian model.

use std::sync::Arc;

use anyhow::Result;
use lmala::autodiff::RealMatrix;
use lmala::encoding::{build_encoding, generate_pattern_with_center, AcquisitionModel, CoilSensitivities, KSpaceData, NoiseCovariance};
use lmala::numerics::{CgConfig, ComplexArray, LinearOperator, RealArray};
use lmala::posterior::{log_posterior_and_grad, map_estimate, PosteriorTarget, ScalePolicy};
use lmala::prior::{Decoder, EmpiricalPrior, LinearDecoder};
use lmala::rng::ChainRng;
use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

fn main() -> Result<()> {
    let (n, d, sigma_x, noise) = (8, 6, 0.3, 0.05);
    let mut rng = ChainRng::seed_from_u64(2);
    let weight = RealMatrix::new(n * n, d, rng.normals(n * n * d).into_iter().map(|v| 0.3 * v).collect())?;
    let decoder = LinearDecoder::new(weight, RealArray::from_fn(&[n, n], |_| 0.5), vec![d], sigma_x)?;
    let model = AcquisitionModel {
        coils: CoilSensitivities::normalized(ComplexArray::from_fn(&[2, n, n], |_| Complex64::new(rng.normal(), rng.normal())))?,
        noise: NoiseCovariance::Isotropic(noise),
        ..AcquisitionModel::plain(generate_pattern_with_center(n, 2.0, 20, 0, 2)?, n, n)
    };
    let e = build_encoding(&model)?;
    let z_true = RealArray::new(vec![d], rng.normals(d))?;
    let mut y = e.apply(&decoder.decode(&z_true)?)?;
    y.data_mut().iter_mut().for_each(|v| *v += Complex64::new(noise.sqrt() * rng.normal(), noise.sqrt() * rng.normal()));
    let data = KSpaceData::new(y, model.pattern.clone(), model.noise.clone())?;
    let target = PosteriorTarget::new(
        Arc::new(decoder.clone()),
        Arc::new(EmpiricalPrior::standard(&[d])),
        &e,
        data.clone(),
        CgConfig::new(64)?,
        ScalePolicy::Fixed(1.0),
    )?;

    let start = RealArray::zeros(&[d]);
    let map = map_estimate(&target, &start, 500, 0.01)?;
    println!("log-posterior {:.4} → {:.4} in {} accepted steps", map.trace[0], map.trace.last().unwrap(), map.trace.len() - 1);

    // Gaussian posterior over z: precision I + Gᴴ(EΣxEᴴ + Σns)⁻¹G with G = E W, in real form.
    let w = decoder.weight();
    let ew: Vec<ComplexArray> = (0..d)
        .map(|j| e.apply(&RealArray::from_fn(&[n, n], |i| w.get(i, j)).to_complex()))
        .collect::<lmala::Result<_>>()?;
    let m = ew[0].len();
    let g = DMatrix::from_fn(m, d, |i, j| ew[j].data()[i]);
    let dense_e = lmala::numerics::DenseMatrix::from_operator(&e);
    let em = DMatrix::from_fn(m, n * n, |i, j| dense_e.get(i, j));
    let cov = &em * em.adjoint() * Complex64::new(sigma_x * sigma_x, 0.0) + DMatrix::identity(m, m) * Complex64::new(noise, 0.0);
    let cinv = cov.try_inverse().expect("SPD covariance");
    let r = DVector::from_column_slice(data.samples.data()) - DVector::from_column_slice(e.apply(&decoder.offset().to_complex())?.data());
    let prec = DMatrix::<f64>::identity(d, d) + (g.adjoint() * &cinv * &g).map(|v| v.re);
    let rhs = (g.adjoint() * &cinv * r).map(|v| v.re);
    let mean = prec.lu().solve(&rhs).expect("invertible precision");
    let err = map.z.data().iter().zip(mean.iter()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    println!("max |z_MAP − analytic mean| = {err:.2e}");
    let at_mean = log_posterior_and_grad(&target, &RealArray::new(vec![d], mean.as_slice().to_vec())?)?;
    println!("gradient norm at the analytic mean {:.2e}", at_mean.grad.norm());
    Ok(())
}
