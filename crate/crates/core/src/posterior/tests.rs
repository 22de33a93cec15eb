use std::sync::Arc;

use num_complex::Complex64;

use super::*;
use crate::autodiff::{finite_difference_check, Tape, Var};
use crate::encoding::{build_encoding, generate_pattern_with_center, AcquisitionModel, CoilSensitivities, NoiseCovariance, PadSpec};
use crate::numerics::ComplexArray;
use crate::prior::{ConvArchitecture, ConvDecoder};
use crate::rng::ChainRng;

fn conv_target(seed: u64, policy: ScalePolicy) -> (PosteriorTarget, RealArray) {
    let mut rng = ChainRng::seed_from_u64(seed);
    let arch = ConvArchitecture { image: (8, 8), latent_channels: 2, patch: 4, hidden: 3, sigma_x: 0.3 };
    let decoder = ConvDecoder::init(arch, &mut rng).unwrap();
    let maps = ComplexArray::from_fn(&[2, 8, 8], |_| Complex64::new(rng.normal(), rng.normal()));
    let model = AcquisitionModel {
        pattern: generate_pattern_with_center(8, 2.0, 3, seed, 2).unwrap(),
        coils: CoilSensitivities::normalized(maps).unwrap(),
        bias: RealArray::from_fn(&[8, 8], |_| 0.9 + 0.2 * rng.uniform()),
        phase: ComplexArray::from_fn(&[8, 8], |_| Complex64::from_polar(1.0, rng.normal())),
        pad: PadSpec::identity(8, 8),
        scale: 1.0,
        noise: NoiseCovariance::Isotropic(0.2),
    };
    let e = build_encoding(&model).unwrap();
    let z_true = RealArray::from_fn(&[2, 2, 2], |_| rng.normal());
    let x = decoder.decode(&z_true).unwrap();
    let mut y = e.apply(&x).unwrap().scale(Complex64::new(1.3, 0.0));
    y.data_mut().iter_mut().for_each(|v| *v += Complex64::new(0.3 * rng.normal(), 0.3 * rng.normal()));
    let data = KSpaceData::new(y, model.pattern.clone(), model.noise.clone()).unwrap();
    let prior = Arc::new(EmpiricalPrior::standard(&[2, 2, 2]));
    let target = PosteriorTarget::new(Arc::new(decoder), prior, &e, data, CgConfig::default(), policy).unwrap();
    (target, z_true)
}

fn objective(target: &PosteriorTarget) -> impl Fn(&mut Tape, Var) -> Result<Var> + '_ {
    move |tape: &mut Tape, z: Var| {
        let node = log_likelihood(target, tape, z)?;
        let (lp, _) = target.prior().logpdf_and_grad(&tape.real_array(z))?;
        // The prior enters as a quadratic recorded on the tape so FD sees the same sum.
        let mean = tape.constant(target.prior().mean());
        let r = tape.sub(z, mean);
        let q = tape.dot(r, r);
        let q = tape.scale(q, -0.5);
        debug_assert!((tape.scalar(q) - lp).abs() < 1e-9);
        Ok(tape.add(node.value, q))
    }
}

#[test]
fn gradient_matches_finite_differences_at_fixed_scale() {
    for seed in 0..3 {
        let (target, z) = conv_target(seed, ScalePolicy::Fixed(1.3));
        let eval = log_posterior_and_grad(&target, &z).unwrap();
        let (v, g) = crate::autodiff::value_and_grad(&objective(&target), &z).unwrap();
        assert!((v - eval.log_post).abs() <= 1e-10 * v.abs().max(1.0));
        for (a, b) in g.data().iter().zip(eval.grad.data()) {
            assert!((a - b).abs() <= 1e-10 * a.abs().max(1.0));
        }
        let err = finite_difference_check(objective(&target), &z, 1e-4).unwrap();
        assert!(err <= 1e-4, "seed {seed}: {err}");
    }
}

#[test]
fn per_evaluation_scale_is_reported_and_frozen() {
    let (target, z) = conv_target(4, ScalePolicy::PerEvaluation);
    let eval = log_posterior_and_grad(&target, &z).unwrap();
    let s = eval.scale_used;
    assert!(s > 1.0 && s < 1.6, "{s}");
    let fixed = PosteriorTarget { scale_policy: ScalePolicy::Fixed(s), ..target.clone() };
    let frozen = log_posterior_and_grad(&fixed, &z).unwrap();
    assert_eq!(frozen.grad, eval.grad);
    let terms = target.scale_terms(s).unwrap();
    assert!((frozen.log_post + terms - eval.log_post).abs() <= 1e-9 * eval.log_post.abs());
}

/// `log N(y; sEμ, s²σx²EEᴴ + Σns)` for complex data with per-part covariances, from dense matrices.
fn dense_log_marginal(target: &PosteriorTarget, z: &RealArray, s: f64) -> f64 {
    use nalgebra::{DMatrix, DVector};
    let e = target.encoding(s);
    let (n, m) = (e.domain_len(), e.codomain_len());
    let mut dense = DMatrix::<Complex64>::zeros(m, n);
    for j in 0..n {
        let mut unit = vec![Complex64::new(0.0, 0.0); n];
        unit[j] = Complex64::new(1.0, 0.0);
        dense.set_column(j, &DVector::from_vec(e.apply_slice(&unit)));
    }
    let noise = match target.data().noise {
        NoiseCovariance::Isotropic(v) => v,
        _ => unreachable!(),
    };
    let sx2 = target.sigma_x() * target.sigma_x();
    let cov = &dense * dense.adjoint() * Complex64::new(sx2, 0.0) + DMatrix::identity(m, m) * Complex64::new(noise, 0.0);
    let mu = DVector::from_vec(target.decoder().decode_real(z).unwrap().to_complex().data().to_vec());
    let r = DVector::from_column_slice(target.data().samples.data()) - &dense * mu;
    let chol = cov.cholesky().unwrap();
    let quad = (r.adjoint() * chol.solve(&r))[(0, 0)].re;
    let logdet: f64 = 2.0 * chol.l().diagonal().iter().map(|d| d.re.ln()).sum::<f64>();
    -0.5 * quad - logdet
}

#[test]
fn per_evaluation_likelihood_is_the_full_marginal_density() {
    for seed in 11..15 {
        let (target, z1) = conv_target(seed, ScalePolicy::PerEvaluation);
        let mut rng = ChainRng::seed_from_u64(seed + 100);
        let z2 = RealArray::from_fn(&[2, 2, 2], |_| rng.normal());
        let a = log_posterior_and_grad(&target, &z1).unwrap();
        let b = log_posterior_and_grad(&target, &z2).unwrap();
        let got = a.log_likelihood - b.log_likelihood;
        let want = dense_log_marginal(&target, &z1, a.scale_used) - dense_log_marginal(&target, &z2, b.scale_used);
        assert!((got - want).abs() <= 1e-6 * want.abs().max(1.0), "seed {seed}: {got} vs {want}");
    }
}

#[test]
fn prior_only_gradient_vanishes_at_prior_mean() {
    let (target, _) = conv_target(5, ScalePolicy::Fixed(1.0));
    let target = target.with_likelihood_weight(0.0);
    let eval = log_posterior_and_grad(&target, &RealArray::zeros(&[2, 2, 2])).unwrap();
    assert!(eval.grad.data().iter().all(|&g| g == 0.0));
    assert_eq!(eval.log_post, 0.0);
}

#[test]
fn truncated_gradient_is_exact_for_the_truncated_objective() {
    let (target, z) = conv_target(6, ScalePolicy::Fixed(1.0));
    let target = target.with_cg(CgConfig::new(3).unwrap());
    let err = finite_difference_check(objective(&target), &z, 1e-4).unwrap();
    assert!(err <= 1e-4, "{err}");
}

#[test]
fn doubling_cg_iterations_barely_changes_the_likelihood() {
    let (target, z) = conv_target(7, ScalePolicy::Fixed(1.0));
    let a = log_posterior_and_grad(&target, &z).unwrap().log_likelihood;
    let b = log_posterior_and_grad(&target.clone().with_cg(CgConfig::new(50).unwrap()), &z)
        .unwrap()
        .log_likelihood;
    assert!((a - b).abs() <= 1e-3 * b.abs(), "{a} {b}");
}

#[test]
fn map_trace_is_monotone_and_fixed_point_stays() {
    let (target, _) = conv_target(8, ScalePolicy::Fixed(1.3));
    let mut rng = ChainRng::seed_from_u64(80);
    let start = RealArray::from_fn(&[2, 2, 2], |_| rng.normal());
    let res = map_estimate(&target, &start, 200, 0.05).unwrap();
    assert!(res.trace.windows(2).all(|w| w[1] >= w[0]));
    assert!(res.trace.last().unwrap() > &res.trace[0]);
    let again = map_estimate(&target, &res.z, 5, 1e-6).unwrap();
    let moved = again.z.zip_map(&res.z, |a, b| (a - b).abs()).unwrap();
    assert!(moved.data().iter().all(|&d| d <= 1e-4));
}

#[test]
fn evaluation_is_deterministic() {
    let (target, z) = conv_target(9, ScalePolicy::PerEvaluation);
    assert_eq!(log_posterior_and_grad(&target, &z).unwrap(), log_posterior_and_grad(&target, &z).unwrap());
}

#[test]
fn mismatched_shapes_are_rejected() {
    let (target, _) = conv_target(10, ScalePolicy::Fixed(1.0));
    let prior = Arc::new(EmpiricalPrior::standard(&[3]));
    let r = PosteriorTarget::new(
        target.decoder().clone(),
        prior,
        &target.encoding(1.0),
        target.data().clone(),
        CgConfig::default(),
        ScalePolicy::Fixed(1.0),
    );
    assert!(matches!(r, Err(Error::Shape(_))));
    assert!(log_posterior_and_grad(&target, &RealArray::zeros(&[4])).is_err());
}
