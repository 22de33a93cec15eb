//! Builds the multi-coil encoding operator, checks its adjoint and inverts it with CG.

use anyhow::Result;
use lmala::encoding::{build_encoding, generate_pattern_with_center, AcquisitionModel, NoiseCovariance, NormalOperator, PadSpec};
use lmala::numerics::{adjoint_dot_test, cg_solve, CgConfig, LinearOperator};
use lmala::phantom::{make_phantom, PhantomSpec};

fn main() -> Result<()> {
    let ph = make_phantom(&PhantomSpec { size: 32, ellipses: 6, coils: 4, seed: 1 })?;
    let model = AcquisitionModel {
        pattern: generate_pattern_with_center(32, 2.0, 50, 0, 4)?,
        coils: ph.coils.clone(),
        bias: ph.bias.clone(),
        phase: ph.phase.clone(),
        pad: PadSpec::identity(32, 32),
        scale: 1.0,
        noise: NoiseCovariance::Isotropic(1e-4),
    };
    let e = build_encoding(&model)?;
    println!("E: {:?} → {:?}, adjoint dot-test error {:.1e}", e.domain_shape(), e.codomain_shape(), adjoint_dot_test(&e, 5, 0));

    let x = ph.image.to_complex();
    let y = e.apply(&x)?;
    // Tikhonov-regularized normal equations (EᴴΣ⁻¹E + I/σ²) x = EᴴΣ⁻¹y.
    let a = NormalOperator::new(e.clone(), model.noise.clone(), 1.0)?;
    let mut b = y.clone();
    model.noise.apply_inverse(b.data_mut(), e.coils());
    let b = e.adjoint(&b)?;
    for iterations in [5, 25, 100] {
        let sol = cg_solve(&a, &b, CgConfig::new(iterations)?)?;
        let err = sol.solution.sub(&x)?;
        let rel = lmala::numerics::norm(err.data()) / lmala::numerics::norm(x.data());
        println!("CG {iterations:3} iterations: residual {:.2e}, image error {:.2}%", sol.relative_residual, 100.0 * rel);
    }
    Ok(())
}
