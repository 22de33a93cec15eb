//! A small fully convolutional VAE with a spatial latent grid.
//!
//! Encoder: `conv3×3(1→C) → ReLU → conv p×p stride p (C→D)` twice, for `μz` and `log σz`.
//! Decoder: `convᵀ p×p stride p (D→C) → ReLU → conv3×3(C→1)`.
//! Latents are stored channel-first as `[D, H/p, W/p]`.

use serde::{Deserialize, Serialize};

use super::{check_latent, Decoder, Encoder};
use crate::autodiff::{Tape, Var};
use crate::error::{Error, Result};
use crate::numerics::RealArray;
use crate::rng::ChainRng;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvArchitecture {
    pub image: (usize, usize),
    pub latent_channels: usize,
    pub patch: usize,
    pub hidden: usize,
    pub sigma_x: f64,
}

impl Default for ConvArchitecture {
    fn default() -> Self {
        Self { image: (32, 32), latent_channels: 8, patch: 8, hidden: 16, sigma_x: 0.02 }
    }
}

impl ConvArchitecture {
    pub fn validate(&self) -> Result<()> {
        let ok = self.patch > 0
            && self.image.0 % self.patch == 0
            && self.image.1 % self.patch == 0
            && self.latent_channels > 0
            && self.hidden > 0
            && self.image.0 > 0
            && self.image.1 > 0;
        if !ok {
            return Err(Error::InvalidArgument(format!("invalid architecture {self:?}")));
        }
        if !(self.sigma_x > 0.0 && self.sigma_x.is_finite()) {
            return Err(Error::InvalidArgument(format!("σx must be positive, got {}", self.sigma_x)));
        }
        Ok(())
    }

    pub fn latent_shape(&self) -> Vec<usize> {
        vec![self.latent_channels, self.image.0 / self.patch, self.image.1 / self.patch]
    }
}

fn he_init(shape: &[usize], fan_in: usize, gain: f64, rng: &mut ChainRng) -> RealArray {
    let std = gain * (2.0 / fan_in as f64).sqrt();
    RealArray::from_fn(shape, |_| std * rng.normal())
}

pub(crate) const DECODER_PARAMS: [&str; 4] = ["dec.up.weight", "dec.up.bias", "dec.out.weight", "dec.out.bias"];
pub(crate) const ENCODER_PARAMS: [&str; 6] =
    ["enc.in.weight", "enc.in.bias", "enc.mu.weight", "enc.mu.bias", "enc.logsigma.weight", "enc.logsigma.bias"];

#[derive(Clone, Debug, PartialEq)]
pub struct ConvDecoder {
    arch: ConvArchitecture,
    params: Vec<RealArray>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConvEncoder {
    arch: ConvArchitecture,
    params: Vec<RealArray>,
}

fn param_shapes_decoder(a: &ConvArchitecture) -> Vec<Vec<usize>> {
    let (d, c, p) = (a.latent_channels, a.hidden, a.patch);
    vec![vec![d, c, p, p], vec![c], vec![1, c, 3, 3], vec![1]]
}

fn param_shapes_encoder(a: &ConvArchitecture) -> Vec<Vec<usize>> {
    let (d, c, p) = (a.latent_channels, a.hidden, a.patch);
    vec![vec![c, 1, 3, 3], vec![c], vec![d, c, p, p], vec![d], vec![d, c, p, p], vec![d]]
}

fn check_params(expected: Vec<Vec<usize>>, params: &[RealArray]) -> Result<()> {
    if expected.len() != params.len() || expected.iter().zip(params).any(|(s, p)| s.as_slice() != p.shape()) {
        return Err(Error::Shape(format!(
            "parameter shapes {:?}, expected {expected:?}",
            params.iter().map(|p| p.shape().to_vec()).collect::<Vec<_>>()
        )));
    }
    Ok(())
}

impl ConvDecoder {
    pub fn init(arch: ConvArchitecture, rng: &mut ChainRng) -> Result<Self> {
        arch.validate()?;
        let s = param_shapes_decoder(&arch);
        let (d, c) = (arch.latent_channels, arch.hidden);
        let params = vec![
            he_init(&s[0], d, 1.0, rng),
            RealArray::zeros(&s[1]),
            he_init(&s[2], 9 * c, 0.5, rng),
            RealArray::zeros(&s[3]),
        ];
        Ok(Self { arch, params })
    }

    pub fn from_parameters(arch: ConvArchitecture, params: Vec<RealArray>) -> Result<Self> {
        arch.validate()?;
        check_params(param_shapes_decoder(&arch), &params)?;
        Ok(Self { arch, params })
    }

    pub fn architecture(&self) -> &ConvArchitecture {
        &self.arch
    }

    /// Parameter names in the order [`ConvDecoder::from_parameters`] expects.
    pub fn parameter_names() -> Vec<&'static str> {
        DECODER_PARAMS.to_vec()
    }

    /// Named parameters in a fixed order.
    pub fn parameters(&self) -> Vec<(&'static str, &RealArray)> {
        DECODER_PARAMS.iter().copied().zip(self.params.iter()).collect()
    }

    pub(crate) fn params_mut(&mut self) -> &mut [RealArray] {
        &mut self.params
    }

    /// Places the parameters on the tape, as leaves when they are being trained.
    pub(crate) fn vars(&self, tape: &mut Tape, trainable: bool) -> Vec<Var> {
        self.params.iter().map(|p| if trainable { tape.leaf(p) } else { tape.constant(p) }).collect()
    }

    /// `[B, D, L1, L2] → [B, 1, H, W]`.
    pub(crate) fn forward_batch(&self, tape: &mut Tape, vars: &[Var], z: Var) -> Var {
        let p = self.arch.patch;
        let h = tape.conv_transpose2d(z, vars[0], Some(vars[1]), p, 0);
        let h = tape.relu(h);
        tape.conv2d(h, vars[2], Some(vars[3]), 1, 1)
    }
}

impl Decoder for ConvDecoder {
    fn latent_shape(&self) -> Vec<usize> {
        self.arch.latent_shape()
    }

    fn output_shape(&self) -> (usize, usize) {
        self.arch.image
    }

    fn sigma_x(&self) -> f64 {
        self.arch.sigma_x
    }

    fn forward(&self, tape: &mut Tape, z: Var) -> Result<Var> {
        let shape = self.arch.latent_shape();
        if tape.shape(z) != shape.as_slice() {
            return Err(Error::Shape(format!("latent shape {:?}, expected {shape:?}", tape.shape(z))));
        }
        let vars = self.vars(tape, false);
        let zb = tape.reshape(z, &[1, shape[0], shape[1], shape[2]]);
        let out = self.forward_batch(tape, &vars, zb);
        let (h, w) = self.arch.image;
        Ok(tape.reshape(out, &[h, w]))
    }
}

impl ConvEncoder {
    pub fn init(arch: ConvArchitecture, rng: &mut ChainRng) -> Result<Self> {
        arch.validate()?;
        let s = param_shapes_encoder(&arch);
        let (c, p) = (arch.hidden, arch.patch);
        let params = vec![
            he_init(&s[0], 9, 1.0, rng),
            RealArray::zeros(&s[1]),
            he_init(&s[2], c * p * p, 0.5, rng),
            RealArray::zeros(&s[3]),
            he_init(&s[4], c * p * p, 0.1, rng),
            RealArray::from_fn(&s[5], |_| -1.0),
        ];
        Ok(Self { arch, params })
    }

    pub fn from_parameters(arch: ConvArchitecture, params: Vec<RealArray>) -> Result<Self> {
        arch.validate()?;
        check_params(param_shapes_encoder(&arch), &params)?;
        Ok(Self { arch, params })
    }

    pub fn architecture(&self) -> &ConvArchitecture {
        &self.arch
    }

    /// Parameter names in the order [`ConvEncoder::from_parameters`] expects.
    pub fn parameter_names() -> Vec<&'static str> {
        ENCODER_PARAMS.to_vec()
    }

    pub fn parameters(&self) -> Vec<(&'static str, &RealArray)> {
        ENCODER_PARAMS.iter().copied().zip(self.params.iter()).collect()
    }

    pub(crate) fn params_mut(&mut self) -> &mut [RealArray] {
        &mut self.params
    }

    pub(crate) fn vars(&self, tape: &mut Tape, trainable: bool) -> Vec<Var> {
        self.params.iter().map(|p| if trainable { tape.leaf(p) } else { tape.constant(p) }).collect()
    }

    /// `[B, 1, H, W] → (μz, log σz)`, each `[B, D, L1, L2]`.
    pub(crate) fn forward_batch(&self, tape: &mut Tape, vars: &[Var], x: Var) -> (Var, Var) {
        let p = self.arch.patch;
        let h = tape.conv2d(x, vars[0], Some(vars[1]), 1, 1);
        let h = tape.relu(h);
        let mu = tape.conv2d(h, vars[2], Some(vars[3]), p, 0);
        let log_sigma = tape.conv2d(h, vars[4], Some(vars[5]), p, 0);
        (mu, log_sigma)
    }
}

impl Encoder for ConvEncoder {
    fn latent_shape(&self) -> Vec<usize> {
        self.arch.latent_shape()
    }

    fn encode(&self, x: &RealArray) -> Result<(RealArray, RealArray)> {
        let (h, w) = self.arch.image;
        if x.shape() != [h, w] {
            return Err(Error::Shape(format!("image {:?}, expected {:?}", x.shape(), [h, w])));
        }
        let mut tape = Tape::new();
        let vars = self.vars(&mut tape, false);
        let xv = tape.constant(&x.clone().reshape(&[1, 1, h, w])?);
        let (mu, ls) = self.forward_batch(&mut tape, &vars, xv);
        let shape = self.arch.latent_shape();
        let mu = tape.real_array(mu).reshape(&shape)?;
        let sigma = tape.real_array(ls).reshape(&shape)?.map(f64::exp);
        check_latent(&shape, &mu)?;
        Ok((mu, sigma))
    }
}
