//! File formats, configuration, simulated acquisitions and the staged experiment runner.

mod acquisition;
mod bundle;
mod config;
mod models;
mod runner;

pub use acquisition::{correlated_noise, simulate_acquisition, Acquisition};
pub use bundle::{read_json, write_json, ArrayBundle, BoolArray, BundleArray, Dtype, ManifestEntry, MANIFEST};
pub use config::{ExperimentConfig, Overrides};
pub use models::{load_prior, load_vae, save_prior, save_vae};
pub use runner::{
    check_config, initial_image, load_models, make_pattern, map_stage, metrics_stage, pattern_stage, phantom_stage,
    posterior_setup, prior_stage, run_experiment, sample_stage, simulate, train_stage, write_phantom, Diagnostics,
    Layout, MapSummary, Models, RunOutput, SampleOutputs, Setup, Stage, StageError, StageResult,
};
