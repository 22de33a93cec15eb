//! Eigen-decomposition behind the scale-dependent likelihood terms.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rayon::prelude::*;

use crate::encoding::{Encoding, NoiseCovariance};
use crate::error::{Error, Result};
use crate::numerics::{ComplexArray, LinearOperator};

/// Largest image (in voxels) for which the dense decomposition is attempted.
pub const MAX_SPECTRUM_VOXELS: usize = 4096;

/// Eigenvalues `λᵢ` of `E₁ᴴΣns⁻¹E₁` and data weights `|vᵢᴴg|²` with `g = E₁ᴴΣns⁻¹y`.
#[derive(Clone, Debug, PartialEq)]
pub struct ScaleSpectrum {
    pub eigenvalues: Vec<f64>,
    pub weights: Vec<f64>,
}

impl ScaleSpectrum {
    pub fn new(encoding: &Encoding, noise: &NoiseCovariance, back_projection: &ComplexArray) -> Result<Self> {
        let n = encoding.domain_len();
        if n > MAX_SPECTRUM_VOXELS {
            return Err(Error::InvalidArgument(format!(
                "per-evaluation scale needs a dense {n}×{n} decomposition; use a fixed scale above {MAX_SPECTRUM_VOXELS} voxels"
            )));
        }
        let coils = encoding.coils();
        let columns: Vec<Vec<Complex64>> = (0..n)
            .into_par_iter()
            .map(|j| {
                let mut e = vec![Complex64::new(0.0, 0.0); n];
                e[j] = Complex64::new(1.0, 0.0);
                let mut k = encoding.apply_slice(&e);
                noise.apply_inverse(&mut k, coils);
                encoding.adjoint_slice(&k)
            })
            .collect();
        let m = DMatrix::from_fn(n, n, |i, j| 0.5 * (columns[j][i] + columns[i][j].conj()));
        let eig = m.symmetric_eigen();
        let g = DVector::from_column_slice(back_projection.data());
        let c = eig.eigenvectors.adjoint() * g;
        Ok(Self {
            eigenvalues: eig.eigenvalues.iter().map(|&l| l.max(0.0)).collect(),
            weights: c.iter().map(|v| v.norm_sqr()).collect(),
        })
    }

    /// `½ s²gᴴ(I/σx² + s²E₁ᴴΣns⁻¹E₁)⁻¹g − Σ log(1 + s²σx²λᵢ)`.
    pub fn terms(&self, scale: f64, sigma_x: f64) -> f64 {
        let (s2, v) = (scale * scale, sigma_x * sigma_x);
        self.eigenvalues
            .iter()
            .zip(&self.weights)
            .map(|(&l, &w)| 0.5 * s2 * w / (1.0 / v + s2 * l) - (s2 * v * l).ln_1p())
            .sum()
    }
}
