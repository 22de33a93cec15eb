//! The experiment pipeline: pattern → acquisition → prewhitening → MAP → chain → image
//! samples → metrics. Each stage reads and writes fixed locations under the output
//! directory, so stages can run one at a time from the command line.

use std::fmt;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use log::info;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::acquisition::{correlated_noise, simulate_acquisition, Acquisition};
use super::bundle::{read_json, write_json, ArrayBundle};
use super::config::ExperimentConfig;
use super::models::{load_prior, load_vae, save_prior, save_vae};
use crate::encoding::{
    build_encoding, estimate_noise_and_prewhiten, generate_pattern_with_center, peak_to_side_ratio, AcquisitionModel,
    Encoding, NoiseCovariance, NoiseRegion, UndersamplingPattern,
};
use crate::error::Error;
use crate::image_step::{decoder_only_sample, latent_to_image_with, local_sampler, masked_mean_series, ImageRoute};
use crate::metrics::{foreground_mask, kspace_abs_error, metrics_report, write_csv, MetricsReport, ReportContext, SampleSet};
use crate::numerics::{cg_solve, CgConfig, ComplexArray, RealArray};
use crate::phantom::{make_phantom, phantom_dataset, Phantom};
use crate::posterior::{map_estimate, PosteriorTarget, ScalePolicy};
use crate::prior::{estimate_empirical_prior, train_toy_vae, ConvDecoder, ConvEncoder, Decoder, EmpiricalPrior, Encoder};
use crate::rng::ChainRng;
use crate::sampler::{chain_diagnostics, run_chain, ChainDiagnostics};

/// Pipeline stages, each with its own process exit code.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Stage {
    Config,
    ModelLoad,
    Pattern,
    Acquisition,
    Prewhiten,
    Map,
    Chain,
    Image,
    Metrics,
    Io,
}

impl Stage {
    pub fn exit_code(self) -> i32 {
        match self {
            Self::Config => 2,
            Self::ModelLoad => 3,
            Self::Pattern => 4,
            Self::Acquisition => 5,
            Self::Prewhiten => 6,
            Self::Map => 7,
            Self::Chain => 8,
            Self::Image => 9,
            Self::Metrics => 10,
            Self::Io => 11,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::Config => "config",
            Self::ModelLoad => "model-load",
            Self::Pattern => "pattern",
            Self::Acquisition => "acquisition",
            Self::Prewhiten => "prewhiten",
            Self::Map => "map",
            Self::Chain => "chain",
            Self::Image => "image",
            Self::Metrics => "metrics",
            Self::Io => "io",
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, thiserror::Error)]
#[error("{stage} stage failed: {source}")]
pub struct StageError {
    pub stage: Stage,
    #[source]
    pub source: Error,
}

pub type StageResult<T> = std::result::Result<T, StageError>;

trait Tag<T> {
    fn at(self, stage: Stage) -> StageResult<T>;
}

impl<T> Tag<T> for crate::error::Result<T> {
    fn at(self, stage: Stage) -> StageResult<T> {
        self.map_err(|source| StageError { stage, source })
    }
}

/// Seeds of the independent random streams of one run.
fn stream_seed(master: u64, stream: u64) -> u64 {
    ChainRng::derive(master, stream).next_u64()
}

const PATTERN_STREAM: u64 = 1;
const NOISE_STREAM: u64 = 2;
const CHAIN_STREAM: u64 = 3;
const LOCAL_STREAM: u64 = 4;
const PAIRS_STREAM: u64 = 5;
const TRAIN_STREAM: u64 = 6;
const PRIOR_STREAM: u64 = 7;

/// File locations under the output directory.
#[derive(Clone, Debug)]
pub struct Layout {
    pub root: PathBuf,
}

impl Layout {
    pub fn new(root: &Path) -> Self {
        Self { root: root.to_path_buf() }
    }
    pub fn config(&self) -> PathBuf {
        self.root.join("config.json")
    }
    pub fn phantom(&self) -> PathBuf {
        self.root.join("phantom")
    }
    pub fn pattern(&self) -> PathBuf {
        self.root.join("pattern.json")
    }
    pub fn acquisition(&self) -> PathBuf {
        self.root.join("acquisition")
    }
    pub fn map(&self) -> PathBuf {
        self.root.join("map")
    }
    pub fn chain(&self) -> PathBuf {
        self.root.join("chain")
    }
    pub fn samples(&self) -> PathBuf {
        self.root.join("samples")
    }
    pub fn diagnostics(&self) -> PathBuf {
        self.root.join("diagnostics.json")
    }
    pub fn metrics_json(&self) -> PathBuf {
        self.root.join("metrics.json")
    }
    pub fn metrics_csv(&self) -> PathBuf {
        self.root.join("metrics.csv")
    }
}

pub fn check_config(cfg: &ExperimentConfig) -> StageResult<()> {
    cfg.validate().at(Stage::Config)
}

pub fn write_phantom(phantom: &Phantom, dir: &Path) -> crate::error::Result<()> {
    let mut b = ArrayBundle::new();
    b.insert_real("image", phantom.image.clone())?;
    b.insert_complex("coils", phantom.coils.maps().clone())?;
    b.insert_real("bias", phantom.bias.clone())?;
    b.insert_complex("phase", phantom.phase.clone())?;
    b.write(dir)
}

/// `make-phantom`: writes the ground-truth bundle.
pub fn phantom_stage(cfg: &ExperimentConfig) -> StageResult<Phantom> {
    check_config(cfg)?;
    let phantom = make_phantom(&cfg.phantom).at(Stage::Acquisition)?;
    write_phantom(&phantom, &Layout::new(&cfg.out).phantom()).at(Stage::Io)?;
    Ok(phantom)
}

pub fn make_pattern(cfg: &ExperimentConfig) -> crate::error::Result<UndersamplingPattern> {
    let n = cfg.phantom.size;
    generate_pattern_with_center(n, cfg.r as f64, cfg.pattern_candidates, stream_seed(cfg.seed, PATTERN_STREAM), cfg.central_lines)
}

/// `make-pattern`: writes `pattern.json`.
pub fn pattern_stage(cfg: &ExperimentConfig) -> StageResult<UndersamplingPattern> {
    check_config(cfg)?;
    let pattern = make_pattern(cfg).at(Stage::Pattern)?;
    write_json(&Layout::new(&cfg.out).pattern(), &pattern).at(Stage::Io)?;
    Ok(pattern)
}

/// Pattern from `pattern.json` if present, else generated.
fn load_or_make_pattern(cfg: &ExperimentConfig, layout: &Layout) -> StageResult<UndersamplingPattern> {
    if layout.pattern().exists() {
        let p: UndersamplingPattern = read_json(&layout.pattern()).at(Stage::Io)?;
        if p.height() != cfg.phantom.size {
            return Err(StageError {
                stage: Stage::Pattern,
                source: Error::Shape(format!("pattern of height {} for a {}-pixel phantom", p.height(), cfg.phantom.size)),
            });
        }
        Ok(p)
    } else {
        pattern_stage(cfg)
    }
}

pub fn simulate(cfg: &ExperimentConfig, pattern: &UndersamplingPattern) -> crate::error::Result<Acquisition> {
    let phantom = make_phantom(&cfg.phantom)?;
    let base = correlated_noise(cfg.base_noise, cfg.coil_correlation, cfg.phantom.coils)?;
    simulate_acquisition(&phantom, pattern, cfg.noise_scale, &base, stream_seed(cfg.seed, NOISE_STREAM))
}

fn acquisition_stage(cfg: &ExperimentConfig, layout: &Layout) -> StageResult<Acquisition> {
    let pattern = load_or_make_pattern(cfg, layout)?;
    let acq = simulate(cfg, &pattern).at(Stage::Acquisition)?;
    acq.write(&layout.acquisition()).at(Stage::Io)?;
    Ok(acq)
}

fn load_acquisition(cfg: &ExperimentConfig, layout: &Layout) -> StageResult<Acquisition> {
    if layout.acquisition().join(super::bundle::MANIFEST).exists() {
        Acquisition::read(&layout.acquisition()).at(Stage::Io)
    } else {
        acquisition_stage(cfg, layout)
    }
}

/// The trained VAE and the empirical prior.
#[derive(Clone)]
pub struct Models {
    pub encoder: Arc<ConvEncoder>,
    pub decoder: Arc<ConvDecoder>,
    pub prior: Arc<EmpiricalPrior>,
}

pub fn load_models(cfg: &ExperimentConfig) -> StageResult<Models> {
    let (encoder, decoder) = load_vae(&cfg.model_dir).at(Stage::ModelLoad)?;
    let prior = load_prior(&cfg.prior_dir).at(Stage::ModelLoad)?;
    if decoder.output_shape() != (cfg.phantom.size, cfg.phantom.size) || prior.shape() != decoder.latent_shape().as_slice() {
        return Err(StageError {
            stage: Stage::ModelLoad,
            source: Error::Shape(format!(
                "decoder {:?} / prior {:?} do not fit a {}-pixel phantom",
                decoder.output_shape(),
                prior.shape(),
                cfg.phantom.size
            )),
        });
    }
    Ok(Models { encoder: Arc::new(encoder), decoder: Arc::new(decoder), prior: Arc::new(prior) })
}

/// `train-vae`: trains on a phantom set and writes the model bundle to `model_dir`.
pub fn train_stage(cfg: &ExperimentConfig) -> StageResult<crate::prior::TrainingReport> {
    check_config(cfg)?;
    let data = phantom_dataset(cfg.training_set, cfg.phantom.size, cfg.phantom.ellipses, stream_seed(cfg.seed, TRAIN_STREAM));
    let mut tc = cfg.training.clone();
    tc.seed = stream_seed(cfg.seed, TRAIN_STREAM);
    let (enc, dec, report) = train_toy_vae(&data, &tc).at(Stage::ModelLoad)?;
    save_vae(&cfg.model_dir, &enc, &dec, Some(&report)).at(Stage::Io)?;
    Ok(report)
}

/// `estimate-prior`: encodes the training set and writes the empirical prior to `prior_dir`.
pub fn prior_stage(cfg: &ExperimentConfig) -> StageResult<EmpiricalPrior> {
    check_config(cfg)?;
    let (enc, _) = load_vae(&cfg.model_dir).at(Stage::ModelLoad)?;
    let data = phantom_dataset(cfg.training_set, cfg.phantom.size, cfg.phantom.ellipses, stream_seed(cfg.seed, TRAIN_STREAM));
    let prior = estimate_empirical_prior(
        &enc,
        &data,
        cfg.prior_samples,
        cfg.prior_joint_channels,
        stream_seed(cfg.seed, PRIOR_STREAM),
    )
    .at(Stage::ModelLoad)?;
    save_prior(&cfg.prior_dir, &prior).at(Stage::Io)?;
    Ok(prior)
}

/// Whitened posterior target for an acquisition.
pub struct Setup {
    pub target: PosteriorTarget,
    pub encoding: Encoding,
    pub noise_region_samples: usize,
}

pub fn posterior_setup(cfg: &ExperimentConfig, acq: &Acquisition, models: &Models) -> StageResult<Setup> {
    let region = NoiseRegion { readout_fraction: cfg.noise_readout_fraction };
    let pw = estimate_noise_and_prewhiten(&acq.data, &acq.model.coils, region).at(Stage::Prewhiten)?;
    let model = AcquisitionModel { coils: pw.coils.clone(), noise: NoiseCovariance::Isotropic(1.0), ..acq.model.clone() };
    let encoding = build_encoding(&model).at(Stage::Prewhiten)?;
    let decoder: Arc<dyn Decoder> = models.decoder.clone();
    let target = PosteriorTarget::new(decoder, models.prior.clone(), &encoding, pw.data, cfg.cg(), ScalePolicy::PerEvaluation)
        .at(Stage::Prewhiten)?;
    Ok(Setup { target, encoding, noise_region_samples: pw.region_samples })
}

/// Regularized least-squares image `Re((EᴴE + I)⁻¹Eᴴy)` used to seed the MAP search.
pub fn initial_image(target: &PosteriorTarget) -> crate::error::Result<RealArray> {
    let op = crate::encoding::NormalOperator::new(target.encoding(1.0), target.data().noise.clone(), 1.0)?;
    Ok(cg_solve(&op, &target.back_projection(1.0), CgConfig { iterations: 10 })?.solution.re())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MapSummary {
    pub log_post: f64,
    pub scale: f64,
    pub steps: usize,
    pub stagnated: bool,
}

fn map_stage_inner(cfg: &ExperimentConfig, setup: &Setup, models: &Models, layout: &Layout) -> StageResult<(RealArray, ComplexArray)> {
    let x0 = initial_image(&setup.target).at(Stage::Map)?;
    let (z0, _) = models.encoder.encode(&x0).at(Stage::Map)?;
    let map = map_estimate(&setup.target, &z0, cfg.map_steps, cfg.map_step_size).at(Stage::Map)?;
    let x_map = latent_to_image_with(&setup.target, &map.z, ImageRoute::Exact, 0).at(Stage::Map)?;
    let mut b = ArrayBundle::new();
    b.insert_real("z", map.z.clone()).at(Stage::Io)?;
    b.insert_complex("image", x_map.complex.clone()).at(Stage::Io)?;
    b.insert_real("trace", RealArray::new(vec![map.trace.len()], map.trace.clone()).at(Stage::Io)?).at(Stage::Io)?;
    let summary = MapSummary {
        log_post: map.evaluation.log_post,
        scale: map.evaluation.scale_used,
        steps: map.trace.len(),
        stagnated: map.stagnated,
    };
    b.set_meta("summary", &summary).at(Stage::Io)?;
    b.write(&layout.map()).at(Stage::Io)?;
    info!("MAP: log posterior {:.4e} after {} steps", summary.log_post, summary.steps);
    Ok((map.z, x_map.complex))
}

/// `map`: writes the MAP latent and image.
pub fn map_stage(cfg: &ExperimentConfig) -> StageResult<(RealArray, ComplexArray)> {
    check_config(cfg)?;
    let layout = Layout::new(&cfg.out);
    let models = load_models(cfg)?;
    let acq = load_acquisition(cfg, &layout)?;
    let setup = posterior_setup(cfg, &acq, &models)?;
    map_stage_inner(cfg, &setup, &models, &layout)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub chain: ChainDiagnostics,
    pub pattern_peak_to_side: f64,
    pub noise_region_samples: usize,
    pub sampled_lines: usize,
}

/// Image samples of every method, with the k-space error of each.
#[derive(Clone, Debug)]
pub struct SampleOutputs {
    pub lmala: Vec<RealArray>,
    pub decoder_only: Vec<RealArray>,
    pub local: Vec<RealArray>,
    pub kspace_lmala: Vec<f64>,
    pub kspace_decoder: Vec<f64>,
    pub kspace_local: Vec<f64>,
    pub diagnostics: Diagnostics,
}

fn sample_stage_inner(
    cfg: &ExperimentConfig,
    acq: &Acquisition,
    setup: &Setup,
    models: &Models,
    x_map: &ComplexArray,
    layout: &Layout,
) -> StageResult<SampleOutputs> {
    let target = &setup.target;
    let chain_cfg = cfg.chain(stream_seed(cfg.seed, CHAIN_STREAM));
    let trace = run_chain(target, &chain_cfg, x_map, models.encoder.as_ref()).at(Stage::Chain)?;
    info!(
        "chain: acceptance {:.3} (post burn-in {:.3}), τ {:.3e} → {:.3e}",
        trace.acceptance_rate(),
        trace.post_burn_in_acceptance(),
        trace.initial_tau,
        trace.final_tau
    );

    let images = trace
        .samples
        .par_iter()
        .zip(trace.sample_steps.par_iter())
        .map(|(z, &step)| latent_to_image_with(target, z, ImageRoute::Exact, step))
        .collect::<crate::error::Result<Vec<_>>>()
        .at(Stage::Image)?;
    let y = &target.data().samples;
    let kerr = |x: &ComplexArray, s: f64| kspace_abs_error(x, &target.encoding(s), y);
    let kspace_lmala = images.iter().map(|im| kerr(&im.complex, im.scale)).collect::<crate::error::Result<Vec<_>>>().at(Stage::Image)?;
    let decoder_c = trace
        .samples
        .par_iter()
        .map(|z| decoder_only_sample(models.decoder.as_ref(), z))
        .collect::<crate::error::Result<Vec<_>>>()
        .at(Stage::Image)?;
    let kspace_decoder = decoder_c
        .iter()
        .zip(&images)
        .map(|(x, im)| kerr(x, im.scale))
        .collect::<crate::error::Result<Vec<_>>>()
        .at(Stage::Image)?;
    let n_local = cfg.local_samples.unwrap_or(images.len()).max(1);
    let mut rng = ChainRng::seed_from_u64(stream_seed(cfg.seed, LOCAL_STREAM));
    let local_c = local_sampler(models.encoder.as_ref(), models.decoder.as_ref(), &x_map.re(), n_local, &mut rng).at(Stage::Image)?;
    let kspace_local = local_c
        .iter()
        .map(|x| target.scale_for(&x.re()).and_then(|s| kerr(x, s)))
        .collect::<crate::error::Result<Vec<_>>>()
        .at(Stage::Image)?;

    let mask = foreground_mask(&acq.phantom.image, cfg.mask_fraction).at(Stage::Image)?;
    let lmala: Vec<RealArray> = images.iter().map(|im| im.magnitude.clone()).collect();
    let series = masked_mean_series(&lmala, &mask).at(Stage::Image)?;
    let diagnostics = Diagnostics {
        chain: chain_diagnostics(&trace, Some(series)),
        pattern_peak_to_side: peak_to_side_ratio(acq.model.pattern.mask()),
        noise_region_samples: setup.noise_region_samples,
        sampled_lines: acq.model.pattern.sampled_count(),
    };

    let mut chain = ArrayBundle::new();
    let io = |r: crate::error::Result<()>| r.at(Stage::Io);
    io(chain.insert_stack("z", &trace.samples))?;
    let vec1 = |v: &[f64]| RealArray::new(vec![v.len()], v.to_vec());
    io(chain.insert_real("log_post", vec1(&trace.log_post).at(Stage::Io)?))?;
    io(chain.insert_bool("accepted", vec![trace.accepted.len()], trace.accepted.clone()))?;
    io(chain.insert_real("scales", vec1(&trace.sample_scales).at(Stage::Io)?))?;
    io(chain.insert_real("sample_log_post", vec1(&trace.sample_log_post).at(Stage::Io)?))?;
    io(chain.insert_real("tau_history", vec1(&trace.tau_history).at(Stage::Io)?))?;
    io(chain.set_meta("sample_steps", &trace.sample_steps))?;
    io(chain.set_meta("accept_count", &trace.accept_count))?;
    io(chain.set_meta("final_tau", &trace.final_tau))?;
    io(chain.write(&layout.chain()))?;

    let decoder_only: Vec<RealArray> = decoder_c.iter().map(|x| x.re()).collect();
    let local: Vec<RealArray> = local_c.iter().map(|x| x.re()).collect();
    let mut s = ArrayBundle::new();
    io(s.insert_stack("lmala", &lmala))?;
    io(s.insert_stack("lmala_bias", &images.iter().map(|im| im.reapplied_bias.clone()).collect::<Vec<_>>()))?;
    io(s.insert_stack("decoder", &decoder_only))?;
    io(s.insert_stack("local", &local))?;
    io(s.insert_real("kspace_lmala", vec1(&kspace_lmala).at(Stage::Io)?))?;
    io(s.insert_real("kspace_decoder", vec1(&kspace_decoder).at(Stage::Io)?))?;
    io(s.insert_real("kspace_local", vec1(&kspace_local).at(Stage::Io)?))?;
    io(s.set_meta("step_index", &images.iter().map(|im| im.step_index).collect::<Vec<_>>()))?;
    io(s.set_meta("scale", &images.iter().map(|im| im.scale).collect::<Vec<_>>()))?;
    io(s.set_meta("log_post", &trace.sample_log_post))?;
    io(s.write(&layout.samples()))?;
    write_json(&layout.diagnostics(), &diagnostics).at(Stage::Io)?;
    Ok(SampleOutputs { lmala, decoder_only, local, kspace_lmala, kspace_decoder, kspace_local, diagnostics })
}

/// `sample`: runs the chain from the stored MAP image and writes chain, samples and diagnostics.
pub fn sample_stage(cfg: &ExperimentConfig) -> StageResult<SampleOutputs> {
    check_config(cfg)?;
    let layout = Layout::new(&cfg.out);
    let models = load_models(cfg)?;
    let acq = load_acquisition(cfg, &layout)?;
    let setup = posterior_setup(cfg, &acq, &models)?;
    let x_map = if layout.map().join(super::bundle::MANIFEST).exists() {
        ArrayBundle::read(&layout.map()).and_then(|b| b.complex("image").cloned()).at(Stage::Io)?
    } else {
        map_stage_inner(cfg, &setup, &models, &layout)?.1
    };
    sample_stage_inner(cfg, &acq, &setup, &models, &x_map, &layout)
}

fn reports(cfg: &ExperimentConfig, acq: &Acquisition, out: &SampleOutputs) -> crate::error::Result<Vec<MetricsReport>> {
    let mask = foreground_mask(&acq.phantom.image, cfg.mask_fraction)?;
    let methods: [(&str, &Vec<RealArray>, &Vec<f64>); 3] = [
        ("l-mala", &out.lmala, &out.kspace_lmala),
        ("decoder", &out.decoder_only, &out.kspace_decoder),
        ("local", &out.local, &out.kspace_local),
    ];
    methods
        .iter()
        .map(|(name, images, kerr)| {
            let set = SampleSet::new((*images).clone(), acq.phantom.image.clone(), mask.clone(), 0)?;
            let ctx = ReportContext {
                method: name.to_string(),
                r: acq.model.pattern.acceleration(),
                noise_scale: acq.noise_scale,
                pairs: cfg.pairs,
                seed: stream_seed(cfg.seed, PAIRS_STREAM),
            };
            metrics_report(&set, Some(kerr), &ctx)
        })
        .collect()
}

fn write_reports(layout: &Layout, reports: &[MetricsReport]) -> StageResult<()> {
    write_json(&layout.metrics_json(), &reports).at(Stage::Io)?;
    let file = std::fs::File::create(layout.metrics_csv()).map_err(Error::from).at(Stage::Io)?;
    write_csv(reports, std::io::BufWriter::new(file)).at(Stage::Io)
}

/// `metrics`: evaluates the stored samples against the stored ground truth.
pub fn metrics_stage(cfg: &ExperimentConfig) -> StageResult<Vec<MetricsReport>> {
    check_config(cfg)?;
    let layout = Layout::new(&cfg.out);
    let acq = Acquisition::read(&layout.acquisition()).at(Stage::Io)?;
    let b = ArrayBundle::read(&layout.samples()).at(Stage::Io)?;
    let diagnostics: Diagnostics = read_json(&layout.diagnostics()).at(Stage::Io)?;
    let vecf = |name: &str| b.real(name).map(|a| a.data().to_vec());
    let out = (|| -> crate::error::Result<SampleOutputs> {
        Ok(SampleOutputs {
            lmala: b.unstack("lmala")?,
            decoder_only: b.unstack("decoder")?,
            local: b.unstack("local")?,
            kspace_lmala: vecf("kspace_lmala")?,
            kspace_decoder: vecf("kspace_decoder")?,
            kspace_local: vecf("kspace_local")?,
            diagnostics,
        })
    })()
    .at(Stage::Io)?;
    let reps = reports(cfg, &acq, &out).at(Stage::Metrics)?;
    write_reports(&layout, &reps)?;
    Ok(reps)
}

/// Everything a full run produces.
#[derive(Clone, Debug)]
pub struct RunOutput {
    pub out: PathBuf,
    pub reports: Vec<MetricsReport>,
    pub samples: SampleOutputs,
    pub z_map: RealArray,
}

/// `run`: all stages in order. Models must already exist.
pub fn run_experiment(cfg: &ExperimentConfig) -> StageResult<RunOutput> {
    check_config(cfg)?;
    let layout = Layout::new(&cfg.out);
    write_json(&layout.config(), cfg).at(Stage::Io)?;
    let models = load_models(cfg)?;
    let pattern = pattern_stage(cfg)?;
    let acq = simulate(cfg, &pattern).at(Stage::Acquisition)?;
    acq.write(&layout.acquisition()).at(Stage::Io)?;
    let setup = posterior_setup(cfg, &acq, &models)?;
    let (z_map, x_map) = map_stage_inner(cfg, &setup, &models, &layout)?;
    let samples = sample_stage_inner(cfg, &acq, &setup, &models, &x_map, &layout)?;
    let reports = reports(cfg, &acq, &samples).at(Stage::Metrics)?;
    write_reports(&layout, &reports)?;
    Ok(RunOutput { out: cfg.out.clone(), reports, samples, z_map })
}
