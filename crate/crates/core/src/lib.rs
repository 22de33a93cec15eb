//! Latent-space MALA sampling of MRI reconstructions under a VAE prior.

pub mod autodiff;
pub mod encoding;
pub mod error;
pub mod image_step;
pub mod io;
pub mod metrics;
pub mod numerics;
pub mod phantom;
pub mod posterior;
pub mod prior;
pub mod rng;
pub mod sampler;

pub use error::{Error, Result};
