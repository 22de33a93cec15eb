//! JSON experiment configuration. Command-line flags override file values, which override
//! the defaults below.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::CgConfig;
use crate::phantom::PhantomSpec;
use crate::prior::TrainingConfig;
use crate::sampler::ChainConfig;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Master seed; pattern, noise, chain and metric streams are derived from it.
    pub seed: u64,
    pub phantom: PhantomSpec,
    /// Undersampling factor `R`.
    pub r: usize,
    pub pattern_candidates: usize,
    /// Fully sampled lines around the k-space centre.
    pub central_lines: usize,
    /// Multiplier on `base_noise`.
    pub noise_scale: f64,
    /// Per-part noise standard deviation `σ₀` of the simulated acquisition.
    pub base_noise: f64,
    /// Correlation `ρ^|i−j|` between coils `i` and `j` in the simulated noise.
    pub coil_correlation: f64,
    /// Fraction of the readout axis used for noise estimation.
    pub noise_readout_fraction: f64,
    pub cg_iterations: usize,
    pub map_steps: usize,
    pub map_step_size: f64,
    pub tau: f64,
    pub steps: usize,
    pub burn_in: usize,
    pub thinning: usize,
    pub adapt_tau: bool,
    /// Local-sampler draws; defaults to the number of retained chain samples.
    pub local_samples: Option<usize>,
    pub pairs: usize,
    pub mask_fraction: f64,
    pub training: TrainingConfig,
    pub training_set: usize,
    /// Encoded draws used to fit the empirical prior.
    pub prior_samples: usize,
    /// Channels sharing the joint prior block.
    pub prior_joint_channels: usize,
    pub model_dir: PathBuf,
    pub prior_dir: PathBuf,
    pub out: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            phantom: PhantomSpec::default(),
            r: 3,
            pattern_candidates: 100,
            central_lines: 4,
            noise_scale: 1.0,
            base_noise: 0.02,
            coil_correlation: 0.3,
            noise_readout_fraction: 0.125,
            cg_iterations: CgConfig::default().iterations,
            map_steps: 200,
            map_step_size: 1e-5,
            tau: ChainConfig::default().tau,
            steps: 10_000,
            burn_in: 3000,
            thinning: 10,
            adapt_tau: true,
            local_samples: None,
            pairs: 1000,
            mask_fraction: 0.1,
            training: TrainingConfig::default(),
            training_set: 200,
            prior_samples: 2000,
            prior_joint_channels: 2,
            model_dir: PathBuf::from("models/vae"),
            prior_dir: PathBuf::from("models/prior"),
            out: PathBuf::from("out"),
        }
    }
}

/// Values given on the command line.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub r: Option<usize>,
    pub noise_scale: Option<f64>,
    pub steps: Option<usize>,
    pub tau: Option<f64>,
}

impl ExperimentConfig {
    /// Reads a config file; missing fields take their defaults.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn apply(mut self, o: &Overrides) -> Self {
        if let Some(s) = o.seed {
            self.seed = s;
        }
        if let Some(out) = &o.out {
            self.out = out.clone();
        }
        if let Some(r) = o.r {
            self.r = r;
        }
        if let Some(n) = o.noise_scale {
            self.noise_scale = n;
        }
        if let Some(t) = o.steps {
            self.steps = t;
        }
        if let Some(t) = o.tau {
            self.tau = t;
        }
        self
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidArgument(msg));
        if self.r == 0 || self.r > self.phantom.size {
            return bad(format!("R must be in 1..={}, got {}", self.phantom.size, self.r));
        }
        if !(self.noise_scale >= 0.0 && self.noise_scale.is_finite()) {
            return bad(format!("noise scale must be ≥ 0, got {}", self.noise_scale));
        }
        if !(self.base_noise > 0.0) || !(0.0..1.0).contains(&self.coil_correlation) {
            return bad("base noise must be positive and coil correlation in [0, 1)".into());
        }
        if !(self.noise_readout_fraction > 0.0 && self.noise_readout_fraction <= 1.0) {
            return bad(format!("noise readout fraction must be in (0, 1], got {}", self.noise_readout_fraction));
        }
        if self.pattern_candidates == 0 || self.pairs == 0 || self.local_samples == Some(0) {
            return bad("candidate, pair and local-sample counts must be positive".into());
        }
        if !(self.map_step_size > 0.0) || !(self.mask_fraction > 0.0 && self.mask_fraction < 1.0) {
            return bad("MAP step size must be positive and mask fraction in (0, 1)".into());
        }
        CgConfig::new(self.cg_iterations)?;
        self.chain(0).validate()?;
        if self.phantom.size < 16 {
            return bad(format!("phantom size must be ≥ 16, got {}", self.phantom.size));
        }
        if self.training.architecture.image != (self.phantom.size, self.phantom.size) {
            return bad(format!(
                "VAE image {:?} does not match phantom size {}",
                self.training.architecture.image, self.phantom.size
            ));
        }
        Ok(())
    }

    pub fn cg(&self) -> CgConfig {
        CgConfig { iterations: self.cg_iterations }
    }

    pub fn chain(&self, seed: u64) -> ChainConfig {
        ChainConfig {
            tau: self.tau,
            total_steps: self.steps,
            burn_in: self.burn_in,
            thinning: self.thinning,
            adapt_tau: self.adapt_tau,
            seed,
            ..ChainConfig::default()
        }
    }

    /// A 16×16 configuration that runs end to end in seconds.
    pub fn smoke() -> Self {
        let mut cfg = Self {
            phantom: PhantomSpec { size: 16, ellipses: 4, coils: 2, seed: 0 },
            r: 2,
            steps: 200,
            burn_in: 100,
            thinning: 2,
            map_steps: 30,
            pairs: 100,
            training_set: 64,
            prior_samples: 400,
            ..Self::default()
        };
        cfg.training.architecture.image = (16, 16);
        cfg.training.architecture.latent_channels = 4;
        cfg.training.architecture.patch = 4;
        cfg.training.architecture.hidden = 8;
        cfg.training.iterations = 150;
        cfg.training.batch_size = 8;
        cfg.training.shift_range = 2;
        cfg
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate_and_partial_files_fill_in() {
        ExperimentConfig::default().validate().unwrap();
        ExperimentConfig::smoke().validate().unwrap();
        let cfg: ExperimentConfig = serde_json::from_str(r#"{"r": 5, "phantom": {"seed": 3}}"#).unwrap();
        assert_eq!(cfg.r, 5);
        assert_eq!(cfg.phantom.seed, 3);
        assert_eq!(cfg.phantom.size, 32);
        assert_eq!(cfg.tau, 4e-4);
    }

    #[test]
    fn flags_override_file_values() {
        let cfg = ExperimentConfig::default().apply(&Overrides { r: Some(4), tau: Some(1e-3), ..Default::default() });
        assert_eq!((cfg.r, cfg.tau, cfg.steps), (4, 1e-3, 10_000));
    }

    #[test]
    fn invalid_values_are_rejected() {
        for cfg in [
            ExperimentConfig { r: 0, ..Default::default() },
            ExperimentConfig { noise_scale: -1.0, ..Default::default() },
            ExperimentConfig { burn_in: 10_000, ..Default::default() },
            ExperimentConfig { cg_iterations: 0, ..Default::default() },
        ] {
            assert!(cfg.validate().is_err());
        }
        assert!(serde_json::from_str::<ExperimentConfig>(r#"{"unknown": 1}"#).is_err());
    }
}
