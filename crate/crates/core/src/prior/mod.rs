//! Latent-variable image priors: decoders `z → μx(z)` with isotropic `Σx`, encoders
//! `x → (μz, σz)`, a toy convolutional VAE and the empirical latent prior.

mod conv;
mod empirical;
mod train;

use std::sync::Arc;

pub use conv::{ConvArchitecture, ConvDecoder, ConvEncoder};
pub use empirical::{estimate_empirical_prior, ks_test, prior_logpdf_and_grad, EmpiricalPrior, KsResult, PriorBlock};
pub use train::{kl_to_standard_normal, train_toy_vae, Optimizer, TrainingConfig, TrainingReport};

use crate::autodiff::{RealMatrix, Tape, Var};
use crate::error::{Error, Result};
use crate::numerics::{ComplexArray, RealArray};

/// `p(x|z) = N(μx(z), σx²·I)` with a tape-recorded mean.
pub trait Decoder: Send + Sync {
    fn latent_shape(&self) -> Vec<usize>;

    /// `(H, W)` of the decoded image.
    fn output_shape(&self) -> (usize, usize);

    fn sigma_x(&self) -> f64;

    /// Records `μx(z)` (real, shape `[H, W]`) on the tape.
    fn forward(&self, tape: &mut Tape, z: Var) -> Result<Var>;

    fn latent_len(&self) -> usize {
        self.latent_shape().iter().product()
    }

    /// `μx(z)` embedded as a complex image with zero imaginary part.
    fn decode(&self, z: &RealArray) -> Result<ComplexArray> {
        Ok(self.decode_real(z)?.to_complex())
    }

    fn decode_real(&self, z: &RealArray) -> Result<RealArray> {
        check_latent(&self.latent_shape(), z)?;
        let mut tape = Tape::new();
        let v = tape.constant(z);
        let out = self.forward(&mut tape, v)?;
        Ok(tape.real_array(out))
    }
}

/// `q(z|x) = N(μz(x), diag σz(x)²)`.
pub trait Encoder: Send + Sync {
    fn latent_shape(&self) -> Vec<usize>;

    /// Encodes a magnitude image `[H, W]`.
    fn encode(&self, x: &RealArray) -> Result<(RealArray, RealArray)>;
}

pub(crate) fn check_latent(expected: &[usize], z: &RealArray) -> Result<()> {
    if z.shape() != expected {
        return Err(Error::Shape(format!("latent shape {:?}, expected {expected:?}", z.shape())));
    }
    Ok(())
}

/// `μx(z) = W z + b`, the analytically tractable oracle decoder.
#[derive(Clone, Debug)]
pub struct LinearDecoder {
    weight: Arc<RealMatrix>,
    offset: RealArray,
    latent_shape: Vec<usize>,
    sigma_x: f64,
}

impl LinearDecoder {
    /// `weight` is `(H·W) × d`, row-major; `offset` has shape `[H, W]`.
    pub fn new(weight: RealMatrix, offset: RealArray, latent_shape: Vec<usize>, sigma_x: f64) -> Result<Self> {
        let d: usize = latent_shape.iter().product();
        if offset.shape().len() != 2 || weight.rows() != offset.len() || weight.cols() != d {
            return Err(Error::Shape(format!(
                "weight {}×{}, offset {:?}, latent {latent_shape:?}",
                weight.rows(),
                weight.cols(),
                offset.shape()
            )));
        }
        if !(sigma_x > 0.0 && sigma_x.is_finite()) {
            return Err(Error::InvalidArgument(format!("σx must be positive, got {sigma_x}")));
        }
        Ok(Self { weight: Arc::new(weight), offset, latent_shape, sigma_x })
    }

    pub fn weight(&self) -> &RealMatrix {
        &self.weight
    }

    pub fn offset(&self) -> &RealArray {
        &self.offset
    }
}

impl Decoder for LinearDecoder {
    fn latent_shape(&self) -> Vec<usize> {
        self.latent_shape.clone()
    }

    fn output_shape(&self) -> (usize, usize) {
        (self.offset.shape()[0], self.offset.shape()[1])
    }

    fn sigma_x(&self) -> f64 {
        self.sigma_x
    }

    fn forward(&self, tape: &mut Tape, z: Var) -> Result<Var> {
        if tape.shape(z) != self.latent_shape.as_slice() {
            return Err(Error::Shape(format!("latent shape {:?}, expected {:?}", tape.shape(z), self.latent_shape)));
        }
        let flat = tape.reshape(z, &[self.weight.cols()]);
        let wz = tape.matvec(self.weight.clone(), flat);
        let b = tape.constant(&self.offset.clone().reshape(&[self.weight.rows()])?);
        let mu = tape.add(wz, b);
        let (h, w) = self.output_shape();
        Ok(tape.reshape(mu, &[h, w]))
    }
}

/// Least-squares inverse of a [`LinearDecoder`] with a fixed spread, used to encode a MAP
/// image into a chain start.
#[derive(Clone, Debug)]
pub struct LinearEncoder {
    pinv: RealMatrix,
    offset: RealArray,
    latent_shape: Vec<usize>,
    sigma: f64,
}

impl LinearEncoder {
    pub fn for_decoder(decoder: &LinearDecoder, sigma: f64) -> Result<Self> {
        let w = decoder.weight();
        let m = nalgebra::DMatrix::from_fn(w.rows(), w.cols(), |i, j| w.get(i, j));
        let pinv = m
            .pseudo_inverse(1e-12)
            .map_err(|e| Error::InvalidArgument(format!("pseudo-inverse failed: {e}")))?;
        let data = pinv.transpose().as_slice().to_vec();
        Ok(Self {
            pinv: RealMatrix::new(w.cols(), w.rows(), data)?,
            offset: decoder.offset().clone(),
            latent_shape: decoder.latent_shape(),
            sigma,
        })
    }
}

impl Encoder for LinearEncoder {
    fn latent_shape(&self) -> Vec<usize> {
        self.latent_shape.clone()
    }

    fn encode(&self, x: &RealArray) -> Result<(RealArray, RealArray)> {
        if x.shape() != self.offset.shape() {
            return Err(Error::Shape(format!("image {:?}, expected {:?}", x.shape(), self.offset.shape())));
        }
        let centered: Vec<f64> = x.data().iter().zip(self.offset.data()).map(|(a, b)| a - b).collect();
        let mu = RealArray::new(self.latent_shape.clone(), self.pinv.matvec(&centered))?;
        let sigma = RealArray::from_fn(&self.latent_shape, |_| self.sigma);
        Ok((mu, sigma))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::ChainRng;

    fn linear(seed: u64) -> LinearDecoder {
        let mut rng = ChainRng::seed_from_u64(seed);
        let w = RealMatrix::new(12, 4, rng.normals(48)).unwrap();
        let b = RealArray::new(vec![3, 4], rng.normals(12)).unwrap();
        LinearDecoder::new(w, b, vec![4], 0.1).unwrap()
    }

    #[test]
    fn linear_decoder_at_zero_and_unit() {
        let dec = linear(1);
        let zero = dec.decode_real(&RealArray::zeros(&[4])).unwrap();
        assert_eq!(zero.data(), dec.offset().data());
        let e1 = dec.decode_real(&RealArray::new(vec![4], vec![1.0, 0.0, 0.0, 0.0]).unwrap()).unwrap();
        for (i, v) in e1.data().iter().enumerate() {
            assert!((v - dec.offset().data()[i] - dec.weight().get(i, 0)).abs() < 1e-15);
        }
        let c = dec.decode(&RealArray::zeros(&[4])).unwrap();
        assert!(c.data().iter().all(|v| v.im == 0.0));
    }

    #[test]
    fn linear_encoder_inverts_decoder() {
        let dec = linear(2);
        let enc = LinearEncoder::for_decoder(&dec, 0.5).unwrap();
        let z = RealArray::new(vec![4], vec![0.3, -1.0, 2.0, 0.1]).unwrap();
        let (mu, sigma) = enc.encode(&dec.decode_real(&z).unwrap()).unwrap();
        for (a, b) in mu.data().iter().zip(z.data()) {
            assert!((a - b).abs() < 1e-10);
        }
        assert!(sigma.data().iter().all(|&s| s == 0.5));
    }

    #[test]
    fn shape_mismatch_is_reported() {
        let dec = linear(3);
        assert!(matches!(dec.decode(&RealArray::zeros(&[5])), Err(Error::Shape(_))));
    }
}
