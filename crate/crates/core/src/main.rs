use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use lmala::io::{self, ExperimentConfig, Overrides, StageError};
use log::error;

/// Latent-space MALA sampling for undersampled MRI.
#[derive(Parser, Debug)]
#[command(version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Flags shared by every subcommand; they override values from `--config`.
#[derive(Args, Debug, Clone)]
struct Common {
    /// JSON experiment config; missing fields take defaults
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Undersampling factor
    #[arg(long, global = true)]
    r: Option<usize>,
    /// Multiplier on the base noise level
    #[arg(long = "noise-scale", global = true)]
    noise_scale: Option<f64>,
    /// Total chain steps
    #[arg(long, global = true)]
    steps: Option<usize>,
    /// Initial MALA step size
    #[arg(long, global = true)]
    tau: Option<f64>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write the ground-truth phantom bundle to OUT/phantom
    MakePhantom(Common),
    /// Select the undersampling pattern and write OUT/pattern.json
    MakePattern(Common),
    /// Train the toy VAE and write it to the config's model_dir (or --model-dir)
    TrainVae {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        model_dir: Option<PathBuf>,
    },
    /// Fit the empirical latent prior and write it to the config's prior_dir (or --prior-dir)
    EstimatePrior {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        model_dir: Option<PathBuf>,
        #[arg(long)]
        prior_dir: Option<PathBuf>,
    },
    /// Simulate (if needed), prewhiten and compute the MAP latent into OUT/map
    Map(Common),
    /// Run the chain and write OUT/chain, OUT/samples and OUT/diagnostics.json
    Sample(Common),
    /// Evaluate stored samples into OUT/metrics.json and OUT/metrics.csv
    Metrics(Common),
    /// Every stage in order
    Run(Common),
}

fn load(common: &Common) -> anyhow::Result<ExperimentConfig> {
    let base = match &common.config {
        Some(p) => ExperimentConfig::load(p).with_context(|| format!("reading config {}", p.display()))?,
        None => ExperimentConfig::default(),
    };
    Ok(base.apply(&Overrides {
        seed: common.seed,
        out: common.out.clone(),
        r: common.r,
        noise_scale: common.noise_scale,
        steps: common.steps,
        tau: common.tau,
    }))
}

fn threads() -> anyhow::Result<()> {
    if let Ok(v) = std::env::var("LMS_THREADS") {
        let n: usize = v.parse().with_context(|| format!("LMS_THREADS={v:?} is not a count"))?;
        rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global()?;
    }
    Ok(())
}

fn execute(cmd: Command) -> Result<(), StageError> {
    let cfg_of = |c: &Common| {
        load(c).map_err(|e| StageError { stage: io::Stage::Config, source: lmala::Error::InvalidArgument(format!("{e:#}")) })
    };
    match cmd {
        Command::MakePhantom(c) => io::phantom_stage(&cfg_of(&c)?).map(drop),
        Command::MakePattern(c) => io::pattern_stage(&cfg_of(&c)?).map(drop),
        Command::TrainVae { common, model_dir } => {
            let mut cfg = cfg_of(&common)?;
            if let Some(d) = model_dir {
                cfg.model_dir = d;
            }
            let report = io::train_stage(&cfg)?;
            println!("ELBO {:.4e} → {:.4e}", report.initial_elbo, report.final_elbo);
            Ok(())
        }
        Command::EstimatePrior { common, model_dir, prior_dir } => {
            let mut cfg = cfg_of(&common)?;
            if let Some(d) = model_dir {
                cfg.model_dir = d;
            }
            if let Some(d) = prior_dir {
                cfg.prior_dir = d;
            }
            let prior = io::prior_stage(&cfg)?;
            println!("channel ranking {:?}", prior.ranking());
            Ok(())
        }
        Command::Map(c) => io::map_stage(&cfg_of(&c)?).map(drop),
        Command::Sample(c) => {
            let out = io::sample_stage(&cfg_of(&c)?)?;
            println!("acceptance {:.3}", out.diagnostics.chain.acceptance_rate);
            Ok(())
        }
        Command::Metrics(c) => print_reports(&io::metrics_stage(&cfg_of(&c)?)?),
        Command::Run(c) => {
            let out = io::run_experiment(&cfg_of(&c)?)?;
            print_reports(&out.reports)
        }
    }
}

fn print_reports(reports: &[lmala::metrics::MetricsReport]) -> Result<(), StageError> {
    for r in reports {
        let pairwise = r.pairwise_rmse.map_or(f64::NAN, |p| p.mean);
        println!(
            "{:<8} RMSE {:6.2}%  pSNR {:6.2}  pairwise {:6.3}%  k-space {:.3e}  directionality {:.3}",
            r.method,
            r.rmse_percent.mean,
            r.psnr.mean,
            pairwise,
            r.kspace_error.map_or(f64::NAN, |k| k.mean),
            r.directionality
        );
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    if let Err(e) = threads() {
        error!("{e:#}");
        return ExitCode::from(io::Stage::Config.exit_code() as u8);
    }
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            error!("{e}");
            ExitCode::from(e.stage.exit_code() as u8)
        }
    }
}
