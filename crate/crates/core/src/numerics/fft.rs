//! Centered, unitary 2D discrete Fourier transforms.
//!
//! The forward transform is `fftshift ∘ DFT ∘ ifftshift` scaled by `1/√(H·W)`, so the
//! zero frequency sits at index `(H/2, W/2)` and Parseval holds exactly. Arrays with more
//! than two dimensions are transformed slice-by-slice over their trailing two axes.

use std::cell::RefCell;
use std::sync::Arc;

use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::{Fft, FftPlanner};

use super::array::ComplexArray;
use crate::error::{Error, Result};

const PARALLEL_MIN_LEN: usize = 1 << 15;

/// Reusable plan for a fixed `H × W` slice size.
#[derive(Clone)]
pub struct Fft2 {
    height: usize,
    width: usize,
    row_fwd: Arc<dyn Fft<f64>>,
    row_inv: Arc<dyn Fft<f64>>,
    col_fwd: Arc<dyn Fft<f64>>,
    col_inv: Arc<dyn Fft<f64>>,
    /// `gather[c·H + r]`: source of the ifftshifted, transposed buffer.
    gather: Arc<[u32]>,
    /// `scatter[r·W + c]`: destination of the fftshift.
    scatter: Arc<[u32]>,
}

impl std::fmt::Debug for Fft2 {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Fft2").field("height", &self.height).field("width", &self.width).finish()
    }
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Direction {
    Forward,
    Inverse,
}

thread_local! {
    static SCRATCH: RefCell<(Vec<Complex64>, Vec<Complex64>)> = const { RefCell::new((Vec::new(), Vec::new())) };
}

impl Fft2 {
    pub fn new(height: usize, width: usize) -> Self {
        let (h, w) = (height, width);
        assert!(h * w <= u32::MAX as usize, "slice too large");
        let mut planner = FftPlanner::new();
        let mut gather = vec![0u32; h * w];
        let mut scatter = vec![0u32; h * w];
        for r in 0..h {
            for c in 0..w {
                gather[c * h + r] = (((r + h / 2) % h) * w + (c + w / 2) % w) as u32;
                scatter[r * w + c] = (((r + h / 2) % h) * w + (c + w / 2) % w) as u32;
            }
        }
        Self {
            height,
            width,
            row_fwd: planner.plan_fft_forward(width),
            row_inv: planner.plan_fft_inverse(width),
            col_fwd: planner.plan_fft_forward(height),
            col_inv: planner.plan_fft_inverse(height),
            gather: gather.into(),
            scatter: scatter.into(),
        }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn slice_len(&self) -> usize {
        self.height * self.width
    }

    /// Forward centered transform of every `H × W` slice in `data`, in place.
    pub fn forward_inplace(&self, data: &mut [Complex64]) {
        self.transform_all(data, Direction::Forward);
    }

    pub fn inverse_inplace(&self, data: &mut [Complex64]) {
        self.transform_all(data, Direction::Inverse);
    }

    fn transform_all(&self, data: &mut [Complex64], dir: Direction) {
        let n = self.slice_len();
        assert_eq!(data.len() % n, 0, "buffer is not a whole number of slices");
        // Below this size rayon's hand-off costs more than the transforms themselves.
        if data.len() / n > 1 && data.len() >= PARALLEL_MIN_LEN {
            data.par_chunks_mut(n).for_each(|slice| self.transform_slice(slice, dir));
        } else {
            data.chunks_mut(n).for_each(|slice| self.transform_slice(slice, dir));
        }
    }

    fn transform_slice(&self, slice: &mut [Complex64], dir: Direction) {
        let (h, w) = (self.height, self.width);
        let (col, row) = match dir {
            Direction::Forward => (&self.col_fwd, &self.row_fwd),
            Direction::Inverse => (&self.col_inv, &self.row_inv),
        };
        SCRATCH.with_borrow_mut(|(buf, scratch)| {
            let zero = Complex64::new(0.0, 0.0);
            buf.resize(h * w, zero);
            let need = col.get_inplace_scratch_len().max(row.get_inplace_scratch_len());
            if scratch.len() < need {
                scratch.resize(need, zero);
            }
            // ifftshift on both axes, written transposed so columns become contiguous rows
            buf.iter_mut().zip(self.gather.iter()).for_each(|(b, &i)| *b = slice[i as usize]);
            col.process_with_scratch(buf, &mut scratch[..col.get_inplace_scratch_len()]);
            for c in 0..w {
                for r in 0..h {
                    slice[r * w + c] = buf[c * h + r];
                }
            }
            row.process_with_scratch(slice, &mut scratch[..row.get_inplace_scratch_len()]);
            // fftshift on both axes with unitary scaling
            let scale = 1.0 / ((h * w) as f64).sqrt();
            buf.copy_from_slice(slice);
            buf.iter().zip(self.scatter.iter()).for_each(|(&v, &d)| slice[d as usize] = v * scale);
        });
    }
}

fn plan_for(shape: &[usize]) -> Result<Fft2> {
    if shape.len() < 2 || shape[shape.len() - 2] == 0 || shape[shape.len() - 1] == 0 {
        return Err(Error::Shape(format!(
            "centered 2D FFT needs trailing H×W axes, got {shape:?}"
        )));
    }
    Ok(Fft2::new(shape[shape.len() - 2], shape[shape.len() - 1]))
}

/// Unitary centered forward 2D DFT over the trailing two axes.
pub fn fft2_centered(img: &ComplexArray) -> Result<ComplexArray> {
    let plan = plan_for(img.shape())?;
    let mut out = img.clone();
    plan.forward_inplace(out.data_mut());
    Ok(out)
}

/// Inverse of [`fft2_centered`].
pub fn ifft2_centered(kspace: &ComplexArray) -> Result<ComplexArray> {
    let plan = plan_for(kspace.shape())?;
    let mut out = kspace.clone();
    plan.inverse_inplace(out.data_mut());
    Ok(out)
}
