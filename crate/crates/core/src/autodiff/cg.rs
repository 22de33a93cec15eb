//! Conjugate gradients recorded step by step on a tape.

use std::sync::Arc;

use num_complex::Complex64;

use super::tape::{Tape, Var};
use crate::error::{Error, Result};
use crate::numerics::LinearOperator;

/// Result of an unrolled solve: the solution node and the final relative residual.
#[derive(Clone, Copy, Debug)]
pub struct UnrolledSolve {
    pub solution: Var,
    pub relative_residual: f64,
}

/// Records exactly `iterations` CG steps for `A γ = b` starting from `γ₀ = 0`.
///
/// The graph depends on `b` through every step, so back-propagation yields the gradient of
/// the truncated solve. A residual that vanishes exactly ends the recording early.
pub fn cg_unrolled(
    tape: &mut Tape,
    op: Arc<dyn LinearOperator>,
    b: Var,
    iterations: usize,
) -> Result<UnrolledSolve> {
    if iterations == 0 {
        return Err(Error::InvalidArgument("CG needs at least one iteration".into()));
    }
    if op.domain_len() != op.codomain_len() || tape.complex_value(b).len() != op.domain_len() {
        return Err(Error::Shape("CG operator is not square on the rhs space".into()));
    }
    let b_norm = tape.complex_value(b).iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt();
    let zero = tape.cscale(b, Complex64::new(0.0, 0.0));
    let mut x = zero;
    let mut r = b;
    let mut p = b;
    let mut rs = tape.re_dot(r, r);
    for it in 0..iterations {
        if tape.scalar(rs) == 0.0 {
            break;
        }
        let ap = tape.apply(op.clone(), p);
        let pap = tape.re_dot(p, ap);
        let alpha = tape.div_scalar(rs, pap);
        if !tape.scalar(alpha).is_finite() {
            return Err(Error::NumericalFailure { iteration: it, context: "unrolled CG step length".into() });
        }
        let step = tape.cmul_scalar(alpha, p);
        x = tape.cadd(x, step);
        let dr = tape.cmul_scalar(alpha, ap);
        r = tape.csub(r, dr);
        let rs_new = tape.re_dot(r, r);
        if !tape.scalar(rs_new).is_finite() {
            return Err(Error::NumericalFailure { iteration: it, context: "unrolled CG residual".into() });
        }
        let beta = tape.div_scalar(rs_new, rs);
        let bp = tape.cmul_scalar(beta, p);
        p = tape.cadd(r, bp);
        rs = rs_new;
    }
    let rel = if b_norm == 0.0 { 0.0 } else { tape.scalar(rs).sqrt() / b_norm };
    Ok(UnrolledSolve { solution: x, relative_residual: rel })
}
