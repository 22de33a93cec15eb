//! Dense row-major arrays of real and complex doubles.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

fn checked_len(shape: &[usize], len: usize) -> Result<()> {
    let expected: usize = shape.iter().product();
    if expected != len {
        return Err(Error::Shape(format!(
            "shape {shape:?} needs {expected} elements, got {len}"
        )));
    }
    Ok(())
}

/// Row-major array of `f64`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RealArray {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl RealArray {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        checked_len(&shape, data.len())?;
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("array contains non-finite values".into()));
        }
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        let n = shape.iter().product();
        Self { shape: shape.to_vec(), data: vec![0.0; n] }
    }

    pub fn from_fn(shape: &[usize], mut f: impl FnMut(usize) -> f64) -> Self {
        let n: usize = shape.iter().product();
        Self { shape: shape.to_vec(), data: (0..n).map(&mut f).collect() }
    }

    /// Construction without the finiteness scan, for hot paths whose inputs are already checked.
    pub(crate) fn from_parts(shape: Vec<usize>, data: Vec<f64>) -> Self {
        debug_assert_eq!(shape.iter().product::<usize>(), data.len());
        Self { shape, data }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn reshape(mut self, shape: &[usize]) -> Result<Self> {
        checked_len(shape, self.data.len())?;
        self.shape = shape.to_vec();
        Ok(self)
    }

    pub fn to_complex(&self) -> ComplexArray {
        ComplexArray::from_parts(
            self.shape.clone(),
            self.data.iter().map(|&v| Complex64::new(v, 0.0)).collect(),
        )
    }

    pub fn norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn dot(&self, other: &Self) -> f64 {
        self.data.iter().zip(&other.data).map(|(a, b)| a * b).sum()
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self::from_parts(self.shape.clone(), self.data.iter().map(|&v| f(v)).collect())
    }

    pub fn zip_map(&self, other: &Self, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        if self.shape != other.shape {
            return Err(Error::Shape(format!("{:?} vs {:?}", self.shape, other.shape)));
        }
        Ok(Self::from_parts(
            self.shape.clone(),
            self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect(),
        ))
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Element at a 2D index of a 2D array.
    pub fn at2(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.shape[1] + col]
    }
}

/// Row-major array of `Complex64`.
#[derive(Clone, Debug, PartialEq)]
pub struct ComplexArray {
    shape: Vec<usize>,
    data: Vec<Complex64>,
}

impl ComplexArray {
    pub fn new(shape: Vec<usize>, data: Vec<Complex64>) -> Result<Self> {
        checked_len(&shape, data.len())?;
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("array contains non-finite values".into()));
        }
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        let n = shape.iter().product();
        Self { shape: shape.to_vec(), data: vec![Complex64::new(0.0, 0.0); n] }
    }

    pub(crate) fn from_parts(shape: Vec<usize>, data: Vec<Complex64>) -> Self {
        debug_assert_eq!(shape.iter().product::<usize>(), data.len());
        Self { shape, data }
    }

    pub fn from_fn(shape: &[usize], mut f: impl FnMut(usize) -> Complex64) -> Self {
        let n: usize = shape.iter().product();
        Self { shape: shape.to_vec(), data: (0..n).map(&mut f).collect() }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[Complex64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [Complex64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<Complex64> {
        self.data
    }

    pub fn reshape(mut self, shape: &[usize]) -> Result<Self> {
        checked_len(shape, self.data.len())?;
        self.shape = shape.to_vec();
        Ok(self)
    }

    pub fn re(&self) -> RealArray {
        RealArray::from_parts(self.shape.clone(), self.data.iter().map(|c| c.re).collect())
    }

    pub fn abs(&self) -> RealArray {
        RealArray::from_parts(self.shape.clone(), self.data.iter().map(|c| c.norm()).collect())
    }

    pub fn norm(&self) -> f64 {
        norm(&self.data)
    }

    /// ⟨self, other⟩ = Σ conj(selfᵢ)·otherᵢ
    pub fn vdot(&self, other: &Self) -> Complex64 {
        vdot(&self.data, &other.data)
    }

    pub fn scale(&self, s: Complex64) -> Self {
        Self::from_parts(self.shape.clone(), self.data.iter().map(|&v| v * s).collect())
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        if self.shape != other.shape {
            return Err(Error::Shape(format!("{:?} vs {:?}", self.shape, other.shape)));
        }
        Ok(Self::from_parts(
            self.shape.clone(),
            self.data.iter().zip(&other.data).map(|(a, b)| a - b).collect(),
        ))
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        if self.shape != other.shape {
            return Err(Error::Shape(format!("{:?} vs {:?}", self.shape, other.shape)));
        }
        Ok(Self::from_parts(
            self.shape.clone(),
            self.data.iter().zip(&other.data).map(|(a, b)| a + b).collect(),
        ))
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

pub fn vdot(a: &[Complex64], b: &[Complex64]) -> Complex64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

pub fn norm(a: &[Complex64]) -> f64 {
    a.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_wrong_length_and_nan() {
        assert!(RealArray::new(vec![2, 2], vec![0.0; 3]).is_err());
        assert!(RealArray::new(vec![1], vec![f64::NAN]).is_err());
        assert!(ComplexArray::new(vec![2], vec![Complex64::new(0.0, f64::INFINITY); 2]).is_err());
    }

    #[test]
    fn vdot_conjugates_left() {
        let a = ComplexArray::new(vec![1], vec![Complex64::new(0.0, 1.0)]).unwrap();
        let b = ComplexArray::new(vec![1], vec![Complex64::new(0.0, 1.0)]).unwrap();
        assert_eq!(a.vdot(&b), Complex64::new(1.0, 0.0));
    }
}
