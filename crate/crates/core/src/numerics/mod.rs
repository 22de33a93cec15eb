//! Arrays, centered FFTs, linear operators and conjugate gradients.

pub mod array;
pub mod cg;
pub mod conv;
pub mod fft;
pub mod operator;

pub use array::{norm, vdot, ComplexArray, RealArray};
pub use cg::{cg_solve, CgConfig, CgOutcome};
pub use fft::{fft2_centered, ifft2_centered, Fft2};
pub use operator::{
    adjoint_dot_test, DenseMatrix, Diagonal, FourierOperator, Identity, LinearOperator, Scaled,
    ShiftedGram,
};
