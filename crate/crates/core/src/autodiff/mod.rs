//! Minimal reverse-mode differentiation for scalar objectives of real latent arrays.

mod cg;
mod tape;

pub use cg::{cg_unrolled, UnrolledSolve};
pub use tape::{RealMatrix, Tape, Var};

use crate::error::Result;
use crate::numerics::RealArray;

/// Builds an objective on a fresh tape and returns its value and gradient at `point`.
pub fn value_and_grad<F>(objective: &F, point: &RealArray) -> Result<(f64, RealArray)>
where
    F: Fn(&mut Tape, Var) -> Result<Var>,
{
    let mut tape = Tape::new();
    let z = tape.leaf(point);
    let out = objective(&mut tape, z)?;
    let grad = tape.grad(out, &[z])?.pop().expect("one gradient requested");
    Ok((tape.scalar(out), grad))
}

fn value_at<F>(objective: &F, point: &RealArray) -> Result<f64>
where
    F: Fn(&mut Tape, Var) -> Result<Var>,
{
    let mut tape = Tape::new();
    let z = tape.leaf(point);
    let out = objective(&mut tape, z)?;
    Ok(tape.scalar(out))
}

/// Central-difference gradient of a tape-built objective.
pub fn finite_difference_gradient<F>(objective: &F, point: &RealArray, step: f64) -> Result<RealArray>
where
    F: Fn(&mut Tape, Var) -> Result<Var>,
{
    let mut grad = RealArray::zeros(point.shape());
    let mut probe = point.clone();
    for i in 0..point.len() {
        let base = point.data()[i];
        probe.data_mut()[i] = base + step;
        let up = value_at(objective, &probe)?;
        probe.data_mut()[i] = base - step;
        let down = value_at(objective, &probe)?;
        probe.data_mut()[i] = base;
        grad.data_mut()[i] = (up - down) / (2.0 * step);
    }
    Ok(grad)
}

/// Largest relative disagreement between the tape gradient and central differences, over
/// components whose analytic magnitude exceeds `1e-8`.
pub fn finite_difference_check<F>(objective: F, point: &RealArray, step: f64) -> Result<f64>
where
    F: Fn(&mut Tape, Var) -> Result<Var>,
{
    if step <= 0.0 || !step.is_finite() {
        return Err(crate::Error::InvalidArgument("finite-difference step must be positive".into()));
    }
    let (_, analytic) = value_and_grad(&objective, point)?;
    let numeric = finite_difference_gradient(&objective, point, step)?;
    Ok(analytic
        .data()
        .iter()
        .zip(numeric.data())
        .filter(|(a, _)| a.abs() > 1e-8)
        .map(|(a, n)| (a - n).abs() / a.abs())
        .fold(0.0, f64::max))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::error::Error;
    use crate::numerics::{ComplexArray, DenseMatrix, ShiftedGram};
    use crate::rng::ChainRng;
    use num_complex::Complex64;
    use std::sync::Arc;

    #[test]
    fn sum_of_squares() {
        let z = RealArray::new(vec![2], vec![3.0, -1.0]).unwrap();
        let (v, g) = value_and_grad(
            &|t: &mut Tape, z: Var| {
                let sq = t.square(z);
                Ok(t.sum(sq))
            },
            &z,
        )
        .unwrap();
        assert_eq!(v, 10.0);
        assert_eq!(g.data(), &[6.0, -2.0]);
    }

    #[test]
    fn linear_objective_is_exact_under_fd() {
        let c = RealArray::new(vec![3], vec![0.5, -2.0, 3.0]).unwrap();
        let z = RealArray::new(vec![3], vec![1.0, 2.0, 3.0]).unwrap();
        let err = finite_difference_check(
            |t: &mut Tape, z: Var| {
                let c = t.constant(&c);
                Ok(t.dot(c, z))
            },
            &z,
            1e-3,
        )
        .unwrap();
        assert!(err <= 1e-10, "{err}");
    }

    #[test]
    fn constant_objective_has_zero_gradient() {
        let z = RealArray::new(vec![2], vec![1.0, 2.0]).unwrap();
        let (_, g) = value_and_grad(&|t: &mut Tape, _z: Var| Ok(t.constant_scalar(4.0)), &z).unwrap();
        assert_eq!(g.data(), &[0.0, 0.0]);
        let err = finite_difference_check(|t: &mut Tape, _z: Var| Ok(t.constant_scalar(4.0)), &z, 1e-4).unwrap();
        assert_eq!(err, 0.0);
    }

    #[test]
    fn foreign_variable_is_a_dependency_error() {
        let mut a = Tape::new();
        let mut b = Tape::new();
        let x = a.leaf(&RealArray::zeros(&[1]));
        let y = b.leaf(&RealArray::zeros(&[1]));
        let s = b.sum(y);
        assert!(matches!(b.grad(s, &[x]), Err(Error::Dependency(_))));
    }

    #[test]
    fn elementwise_ops_pass_fd() {
        let mut rng = ChainRng::seed_from_u64(4);
        let z = RealArray::new(vec![5], rng.normals(5).iter().map(|v| v + 3.0).collect()).unwrap();
        let err = finite_difference_check(
            |t: &mut Tape, z: Var| {
                let e = t.exp(z);
                let l = t.log(z);
                let r = t.relu(z);
                let m = t.mul(e, l);
                let s = t.sub(m, r);
                let q = t.scale(s, 0.3);
                let o = t.offset(q, 1.0);
                let sum = t.sum(o);
                let d = t.dot(z, z);
                let ratio = t.div_scalar(sum, d);
                let scaled = t.mul_scalar(ratio, z);
                Ok(t.sum(scaled))
            },
            &z,
            1e-5,
        )
        .unwrap();
        assert!(err < 1e-6, "{err}");
    }

    #[test]
    fn conv_layers_pass_fd() {
        let mut rng = ChainRng::seed_from_u64(8);
        let w1 = RealArray::new(vec![3, 2, 3, 3], rng.normals(54)).unwrap();
        let b1 = RealArray::new(vec![3], rng.normals(3)).unwrap();
        let w2 = RealArray::new(vec![3, 1, 2, 2], rng.normals(12)).unwrap();
        let z = RealArray::new(vec![1, 2, 3, 3], rng.normals(18)).unwrap();
        let err = finite_difference_check(
            |t: &mut Tape, z: Var| {
                let w1 = t.constant(&w1);
                let b1 = t.constant(&b1);
                let w2 = t.constant(&w2);
                let h = t.conv2d(z, w1, Some(b1), 1, 1);
                let h = t.square(h);
                let up = t.conv_transpose2d(h, w2, None, 2, 0);
                let flat = t.reshape(up, &[36]);
                let sq = t.square(flat);
                Ok(t.sum(sq))
            },
            &z,
            1e-5,
        )
        .unwrap();
        assert!(err < 1e-6, "{err}");
    }

    /// bᵀ·CG(A, b(z)) with constant SPD A and affine b(z) = M z + c: the exact quadratic form
    /// has gradient 2 Mᵀ A⁻¹ b(z); with enough iterations the unrolled CG must agree.
    #[test]
    fn cg_quadratic_form_gradient() {
        let n = 6;
        let mut rng = ChainRng::seed_from_u64(12);
        let g: Vec<Complex64> = (0..n * n).map(|_| Complex64::new(rng.normal(), 0.0)).collect();
        let a = Arc::new(ShiftedGram::new(DenseMatrix::new(n, n, g).unwrap(), 1.0, 1.0));
        let m = Arc::new(RealMatrix::new(n, 3, rng.normals(3 * n)).unwrap());
        let c = RealArray::new(vec![n], rng.normals(n)).unwrap();
        let z = RealArray::new(vec![3], rng.normals(3)).unwrap();
        let objective = |t: &mut Tape, z: Var| -> Result<Var> {
            let mz = t.matvec(m.clone(), z);
            let cc = t.constant(&c);
            let b = t.add(mz, cc);
            let bc = t.to_complex(b);
            let sol = cg_unrolled(t, a.clone(), bc, n)?;
            Ok(t.re_dot(bc, sol.solution))
        };
        let (_, grad) = value_and_grad(&objective, &z).unwrap();

        let dense = DenseMatrix::from_operator(a.as_ref());
        let na = nalgebra::DMatrix::from_fn(n, n, |i, j| dense.get(i, j).re);
        let bz = {
            let mut v = m.matvec(z.data());
            v.iter_mut().zip(c.data()).for_each(|(x, y)| *x += y);
            nalgebra::DVector::from_vec(v)
        };
        let sol = na.lu().solve(&bz).unwrap();
        let expected = m.matvec_t(sol.as_slice());
        for (g, e) in grad.data().iter().zip(&expected) {
            assert!((g - 2.0 * e).abs() <= 1e-6 * (2.0 * e).abs().max(1.0), "{g} vs {}", 2.0 * e);
        }
    }

    #[test]
    fn replay_is_bitwise() {
        let n = 4;
        let mut rng = ChainRng::seed_from_u64(2);
        let g: Vec<Complex64> = (0..n * n).map(|_| Complex64::new(rng.normal(), rng.normal())).collect();
        let a = Arc::new(ShiftedGram::new(DenseMatrix::new(n, n, g).unwrap(), 0.5, 1.0));
        let mut t = Tape::new();
        let z = t.leaf(&RealArray::new(vec![n], rng.normals(n)).unwrap());
        let zc = t.to_complex(z);
        let sol = cg_unrolled(&mut t, a, zc, 3).unwrap();
        let _ = t.re_dot(zc, sol.solution);
        assert_eq!(t.replay(), t.recorded());
    }

    #[test]
    fn complex_scaling_adjoint() {
        // L = Re⟨c, k·x⟩ with x = to_complex(z): ∂L/∂z = Re(conj(k)·c)
        let c = ComplexArray::new(vec![2], vec![Complex64::new(1.0, 2.0), Complex64::new(-1.0, 0.5)]).unwrap();
        let k = Complex64::new(0.3, -0.7);
        let z = RealArray::new(vec![2], vec![0.2, 0.9]).unwrap();
        let (_, g) = value_and_grad(
            &|t: &mut Tape, z: Var| {
                let zc = t.to_complex(z);
                let kz = t.cscale(zc, k);
                let cc = t.constant_complex(&c);
                Ok(t.re_dot(cc, kz))
            },
            &z,
        )
        .unwrap();
        for (gi, ci) in g.data().iter().zip(c.data()) {
            assert!((gi - (ci.conj() * k).re).abs() < 1e-14);
        }
    }
}
