//! Reverse-mode gradients through an unrolled CG solve, checked against finite differences.

use std::sync::Arc;

use anyhow::Result;
use lmala::autodiff::{cg_unrolled, finite_difference_check, value_and_grad, Tape, Var};
use lmala::numerics::{DenseMatrix, LinearOperator, RealArray};
use lmala::rng::ChainRng;
use num_complex::Complex64;

fn main() -> Result<()> {
    let n = 6;
    let mut rng = ChainRng::seed_from_u64(3);
    let m: Vec<Complex64> = (0..n * n).map(|_| Complex64::new(rng.normal(), rng.normal())).collect();
    // A = MᴴM + I is Hermitian positive definite.
    let mut a = vec![Complex64::new(0.0, 0.0); n * n];
    for i in 0..n {
        for j in 0..n {
            a[i * n + j] = (0..n).map(|k| m[k * n + i].conj() * m[k * n + j]).sum::<Complex64>()
                + if i == j { Complex64::new(1.0, 0.0) } else { Complex64::new(0.0, 0.0) };
        }
    }
    let a: Arc<dyn LinearOperator> = Arc::new(DenseMatrix::new(n, n, a)?);

    // f(x) = Re⟨x, A⁻¹ exp(x)⟩ with the solve unrolled for 8 iterations.
    let objective = |tape: &mut Tape, x: Var| -> lmala::Result<Var> {
        let t = tape.exp(x);
        let tc = tape.to_complex(t);
        let solve = cg_unrolled(tape, a.clone(), tc, 8)?;
        let xc = tape.to_complex(x);
        Ok(tape.re_dot(xc, solve.solution))
    };
    let x = RealArray::new(vec![n], rng.normals(n))?;
    let (value, grad) = value_and_grad(&objective, &x)?;
    println!("f(x) = {value:.6}");
    println!("∇f   = {:?}", grad.data().iter().map(|g| format!("{g:.5}")).collect::<Vec<_>>());
    let err = finite_difference_check(objective, &x, 1e-5)?;
    println!("max relative error against central differences: {err:.2e}");
    Ok(())
}
