//! Fixed-iteration conjugate gradients for Hermitian positive-definite operators.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::array::{norm, vdot, ComplexArray};
use super::operator::LinearOperator;
use crate::error::{Error, Result};

/// Number of CG steps; always started from the zero vector.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CgConfig {
    pub iterations: usize,
}

impl CgConfig {
    pub fn new(iterations: usize) -> Result<Self> {
        if iterations == 0 {
            return Err(Error::InvalidArgument("CG needs at least one iteration".into()));
        }
        Ok(Self { iterations })
    }
}

impl Default for CgConfig {
    fn default() -> Self {
        Self { iterations: 25 }
    }
}

#[derive(Clone, Debug)]
pub struct CgOutcome {
    pub solution: ComplexArray,
    /// ‖r‖/‖b‖ from the CG recurrence after the last step.
    pub relative_residual: f64,
    /// Steps actually taken; fewer than configured only if the residual hit exactly zero.
    pub steps: usize,
}

/// Solves `A γ = b` with exactly `cfg.iterations` CG steps from `γ₀ = 0`.
pub fn cg_solve(a: &dyn LinearOperator, b: &ComplexArray, cfg: CgConfig) -> Result<CgOutcome> {
    if b.len() != a.domain_len() || a.domain_len() != a.codomain_len() {
        return Err(Error::Shape(format!(
            "CG operator {:?}→{:?} with rhs {:?}",
            a.domain_shape(),
            a.codomain_shape(),
            b.shape()
        )));
    }
    let (x, rel, steps) = cg_raw(a, b.data(), cfg.iterations)?;
    Ok(CgOutcome {
        solution: ComplexArray::from_parts(b.shape().to_vec(), x),
        relative_residual: rel,
        steps,
    })
}

pub(crate) fn cg_raw(
    a: &dyn LinearOperator,
    b: &[Complex64],
    iterations: usize,
) -> Result<(Vec<Complex64>, f64, usize)> {
    let zero = Complex64::new(0.0, 0.0);
    let mut x = vec![zero; b.len()];
    let mut r = b.to_vec();
    let mut p = r.clone();
    let mut rs = vdot(&r, &r).re;
    let b_norm = rs.sqrt();
    let mut steps = 0;
    for it in 0..iterations {
        if rs == 0.0 {
            break;
        }
        let ap = a.apply_slice(&p);
        let pap = vdot(&p, &ap).re;
        let alpha = rs / pap;
        if !alpha.is_finite() {
            return Err(Error::NumericalFailure { iteration: it, context: "CG step length".into() });
        }
        for ((xi, ri), (pi, api)) in x.iter_mut().zip(r.iter_mut()).zip(p.iter().zip(&ap)) {
            *xi += pi * alpha;
            *ri -= api * alpha;
        }
        let rs_new = vdot(&r, &r).re;
        if !rs_new.is_finite() {
            return Err(Error::NumericalFailure { iteration: it, context: "CG residual".into() });
        }
        let beta = rs_new / rs;
        for (pi, ri) in p.iter_mut().zip(&r) {
            *pi = ri + *pi * beta;
        }
        rs = rs_new;
        steps = it + 1;
    }
    let rel = if b_norm == 0.0 { 0.0 } else { norm(&r) / b_norm };
    Ok((x, rel, steps))
}
