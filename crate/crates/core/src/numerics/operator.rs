//! Matrix-free complex linear operators.

use std::sync::Arc;

use num_complex::Complex64;

use super::array::{norm, vdot, ComplexArray};
use super::fft::Fft2;
use crate::error::{Error, Result};
use crate::rng::ChainRng;

/// A linear map between complex arrays with its adjoint.
///
/// Implementations work on flat row-major slices; the shape-checked [`apply`] and
/// [`adjoint`] wrappers are provided.
///
/// [`apply`]: LinearOperator::apply
/// [`adjoint`]: LinearOperator::adjoint
pub trait LinearOperator: Send + Sync {
    fn domain_shape(&self) -> Vec<usize>;
    fn codomain_shape(&self) -> Vec<usize>;
    fn apply_slice(&self, x: &[Complex64]) -> Vec<Complex64>;
    fn adjoint_slice(&self, y: &[Complex64]) -> Vec<Complex64>;

    fn domain_len(&self) -> usize {
        self.domain_shape().iter().product()
    }

    fn codomain_len(&self) -> usize {
        self.codomain_shape().iter().product()
    }

    fn apply(&self, x: &ComplexArray) -> Result<ComplexArray> {
        let dom = self.domain_shape();
        if x.len() != dom.iter().product::<usize>() {
            return Err(Error::Shape(format!(
                "operator domain {dom:?}, input {:?}",
                x.shape()
            )));
        }
        ComplexArray::new(self.codomain_shape(), self.apply_slice(x.data()))
            .map_err(|_| Error::NumericalFailure { iteration: 0, context: "operator apply".into() })
    }

    fn adjoint(&self, y: &ComplexArray) -> Result<ComplexArray> {
        let cod = self.codomain_shape();
        if y.len() != cod.iter().product::<usize>() {
            return Err(Error::Shape(format!(
                "operator codomain {cod:?}, input {:?}",
                y.shape()
            )));
        }
        ComplexArray::new(self.domain_shape(), self.adjoint_slice(y.data()))
            .map_err(|_| Error::NumericalFailure { iteration: 0, context: "operator adjoint".into() })
    }
}

impl<T: LinearOperator + ?Sized> LinearOperator for Arc<T> {
    fn domain_shape(&self) -> Vec<usize> {
        (**self).domain_shape()
    }
    fn codomain_shape(&self) -> Vec<usize> {
        (**self).codomain_shape()
    }
    fn apply_slice(&self, x: &[Complex64]) -> Vec<Complex64> {
        (**self).apply_slice(x)
    }
    fn adjoint_slice(&self, y: &[Complex64]) -> Vec<Complex64> {
        (**self).adjoint_slice(y)
    }
}

#[derive(Clone, Debug)]
pub struct Identity {
    shape: Vec<usize>,
}

impl Identity {
    pub fn new(shape: &[usize]) -> Self {
        Self { shape: shape.to_vec() }
    }
}

impl LinearOperator for Identity {
    fn domain_shape(&self) -> Vec<usize> {
        self.shape.clone()
    }
    fn codomain_shape(&self) -> Vec<usize> {
        self.shape.clone()
    }
    fn apply_slice(&self, x: &[Complex64]) -> Vec<Complex64> {
        x.to_vec()
    }
    fn adjoint_slice(&self, y: &[Complex64]) -> Vec<Complex64> {
        y.to_vec()
    }
}

/// Elementwise multiplication by a fixed complex vector.
#[derive(Clone, Debug)]
pub struct Diagonal {
    shape: Vec<usize>,
    diag: Vec<Complex64>,
}

impl Diagonal {
    pub fn new(shape: &[usize], diag: Vec<Complex64>) -> Result<Self> {
        if shape.iter().product::<usize>() != diag.len() {
            return Err(Error::Shape(format!("diagonal length {} vs {shape:?}", diag.len())));
        }
        Ok(Self { shape: shape.to_vec(), diag })
    }
}

impl LinearOperator for Diagonal {
    fn domain_shape(&self) -> Vec<usize> {
        self.shape.clone()
    }
    fn codomain_shape(&self) -> Vec<usize> {
        self.shape.clone()
    }
    fn apply_slice(&self, x: &[Complex64]) -> Vec<Complex64> {
        x.iter().zip(&self.diag).map(|(a, d)| a * d).collect()
    }
    fn adjoint_slice(&self, y: &[Complex64]) -> Vec<Complex64> {
        y.iter().zip(&self.diag).map(|(a, d)| a * d.conj()).collect()
    }
}

/// Dense `rows × cols` matrix acting on flat vectors.
#[derive(Clone, Debug)]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    data: Vec<Complex64>,
}

impl DenseMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<Complex64>) -> Result<Self> {
        if rows * cols != data.len() {
            return Err(Error::Shape(format!("{rows}×{cols} matrix with {} entries", data.len())));
        }
        Ok(Self { rows, cols, data })
    }

    /// Materializes any operator column by column.
    pub fn from_operator(op: &dyn LinearOperator) -> Self {
        let (rows, cols) = (op.codomain_len(), op.domain_len());
        let mut data = vec![Complex64::new(0.0, 0.0); rows * cols];
        let mut e = vec![Complex64::new(0.0, 0.0); cols];
        for j in 0..cols {
            e[j] = Complex64::new(1.0, 0.0);
            let col = op.apply_slice(&e);
            for i in 0..rows {
                data[i * cols + j] = col[i];
            }
            e[j] = Complex64::new(0.0, 0.0);
        }
        Self { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn data(&self) -> &[Complex64] {
        &self.data
    }

    pub fn get(&self, i: usize, j: usize) -> Complex64 {
        self.data[i * self.cols + j]
    }
}

impl LinearOperator for DenseMatrix {
    fn domain_shape(&self) -> Vec<usize> {
        vec![self.cols]
    }
    fn codomain_shape(&self) -> Vec<usize> {
        vec![self.rows]
    }
    fn apply_slice(&self, x: &[Complex64]) -> Vec<Complex64> {
        self.data.chunks(self.cols).map(|row| row.iter().zip(x).map(|(a, b)| a * b).sum()).collect()
    }
    fn adjoint_slice(&self, y: &[Complex64]) -> Vec<Complex64> {
        let mut out = vec![Complex64::new(0.0, 0.0); self.cols];
        for (row, yi) in self.data.chunks(self.cols).zip(y) {
            for (o, a) in out.iter_mut().zip(row) {
                *o += a.conj() * yi;
            }
        }
        out
    }
}

/// Centered unitary 2D FFT over the trailing axes of `shape`.
#[derive(Clone, Debug)]
pub struct FourierOperator {
    shape: Vec<usize>,
    plan: Fft2,
}

impl FourierOperator {
    pub fn new(shape: &[usize]) -> Result<Self> {
        if shape.len() < 2 {
            return Err(Error::Shape(format!("Fourier operator needs ≥2 axes, got {shape:?}")));
        }
        let n = shape.len();
        Ok(Self { shape: shape.to_vec(), plan: Fft2::new(shape[n - 2], shape[n - 1]) })
    }
}

impl LinearOperator for FourierOperator {
    fn domain_shape(&self) -> Vec<usize> {
        self.shape.clone()
    }
    fn codomain_shape(&self) -> Vec<usize> {
        self.shape.clone()
    }
    fn apply_slice(&self, x: &[Complex64]) -> Vec<Complex64> {
        let mut out = x.to_vec();
        self.plan.forward_inplace(&mut out);
        out
    }
    fn adjoint_slice(&self, y: &[Complex64]) -> Vec<Complex64> {
        let mut out = y.to_vec();
        self.plan.inverse_inplace(&mut out);
        out
    }
}

/// `shift·I + weight·BᴴB` for an inner operator `B`; Hermitian PSD whenever `shift, weight ≥ 0`.
#[derive(Clone)]
pub struct ShiftedGram<Op> {
    inner: Op,
    shift: f64,
    weight: f64,
}

impl<Op: LinearOperator> ShiftedGram<Op> {
    pub fn new(inner: Op, shift: f64, weight: f64) -> Self {
        Self { inner, shift, weight }
    }
}

impl<Op: LinearOperator> LinearOperator for ShiftedGram<Op> {
    fn domain_shape(&self) -> Vec<usize> {
        self.inner.domain_shape()
    }
    fn codomain_shape(&self) -> Vec<usize> {
        self.inner.domain_shape()
    }
    fn apply_slice(&self, x: &[Complex64]) -> Vec<Complex64> {
        let bx = self.inner.apply_slice(x);
        let bhbx = self.inner.adjoint_slice(&bx);
        x.iter().zip(bhbx).map(|(a, b)| a * self.shift + b * self.weight).collect()
    }
    fn adjoint_slice(&self, y: &[Complex64]) -> Vec<Complex64> {
        self.apply_slice(y)
    }
}

/// `A·v` for a scalar multiple of an operator.
#[derive(Clone)]
pub struct Scaled<Op> {
    inner: Op,
    factor: f64,
}

impl<Op: LinearOperator> Scaled<Op> {
    pub fn new(inner: Op, factor: f64) -> Self {
        Self { inner, factor }
    }
}

impl<Op: LinearOperator> LinearOperator for Scaled<Op> {
    fn domain_shape(&self) -> Vec<usize> {
        self.inner.domain_shape()
    }
    fn codomain_shape(&self) -> Vec<usize> {
        self.inner.codomain_shape()
    }
    fn apply_slice(&self, x: &[Complex64]) -> Vec<Complex64> {
        self.inner.apply_slice(x).into_iter().map(|v| v * self.factor).collect()
    }
    fn adjoint_slice(&self, y: &[Complex64]) -> Vec<Complex64> {
        self.inner.adjoint_slice(y).into_iter().map(|v| v * self.factor).collect()
    }
}

/// Seeded dot test: `max |⟨Av, w⟩ − ⟨v, Aᴴw⟩| / (‖Av‖·‖w‖)` over `trials` random probes.
pub fn adjoint_dot_test(op: &dyn LinearOperator, trials: usize, seed: u64) -> f64 {
    let mut rng = ChainRng::seed_from_u64(seed);
    let mut draw = |n: usize| -> Vec<Complex64> {
        (0..n).map(|_| Complex64::new(rng.normal(), rng.normal())).collect()
    };
    let mut worst = 0.0f64;
    for _ in 0..trials.max(1) {
        let v = draw(op.domain_len());
        let w = draw(op.codomain_len());
        let av = op.apply_slice(&v);
        let ahw = op.adjoint_slice(&w);
        let denom = norm(&av) * norm(&w);
        if denom == 0.0 {
            continue;
        }
        let err = (vdot(&av, &w) - vdot(&v, &ahw)).norm() / denom;
        worst = worst.max(err);
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_dot_test_is_exact() {
        assert_eq!(adjoint_dot_test(&Identity::new(&[5, 3]), 4, 1), 0.0);
    }

    #[test]
    fn fourier_dot_test() {
        let f = FourierOperator::new(&[2, 8, 6]).unwrap();
        assert!(adjoint_dot_test(&f, 5, 3) <= 1e-10);
    }

    #[test]
    fn dense_and_diagonal_dot_tests() {
        let m = DenseMatrix::new(
            2,
            3,
            (0..6).map(|i| Complex64::new(i as f64, 1.0 - i as f64)).collect(),
        )
        .unwrap();
        assert!(adjoint_dot_test(&m, 5, 2) <= 1e-12);
        let d = Diagonal::new(&[3], vec![Complex64::new(0.0, 2.0); 3]).unwrap();
        assert!(adjoint_dot_test(&d, 5, 2) <= 1e-12);
        let g = ShiftedGram::new(m, 0.5, 2.0);
        assert!(adjoint_dot_test(&g, 5, 9) <= 1e-12);
    }

    #[test]
    fn materialization_reproduces_apply() {
        let f = FourierOperator::new(&[4, 4]).unwrap();
        let dense = DenseMatrix::from_operator(&f);
        let x: Vec<_> = (0..16).map(|i| Complex64::new(i as f64, 0.0)).collect();
        let a = f.apply_slice(&x);
        let b = dense.apply_slice(&x);
        assert!(a.iter().zip(&b).all(|(p, q)| (p - q).norm() < 1e-12));
    }

    #[test]
    fn shape_checks() {
        let f = FourierOperator::new(&[4, 4]).unwrap();
        assert!(f.apply(&ComplexArray::zeros(&[3, 4])).is_err());
        assert!(FourierOperator::new(&[4]).is_err());
    }
}
