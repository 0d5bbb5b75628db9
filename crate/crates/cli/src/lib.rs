//! Command-line pipeline around `plume-core`: configuration, data files,
//! the synthetic twin and stage orchestration.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod error;
pub mod io;
pub mod pipeline;
pub mod synthetic;
pub mod timefmt;

use std::path::PathBuf;

use clap::{Parser, Subcommand};

pub use config::RunConfig;
pub use error::{CliError, Result};
pub use pipeline::{Pipeline, Problem, Stage};

/// Directory used for the bundled case when `--out` is not given.
pub const DEFAULT_RUN_DIR: &str = "plume_run";

#[derive(Debug, Parser)]
#[command(name = "plume", version, about = "Estimate fugitive emission rates from deposition and concentration data")]
pub struct Cli {
    /// Run configuration (TOML); the bundled synthetic case when omitted.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory, overriding `paths.out_dir`.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Master seed, overriding the config.
    #[arg(long, global = true, env = "PLUME_SEED")]
    pub seed: Option<u64>,
    /// Multiply every noise standard deviation (e.g. 0.5 to under-state the noise).
    #[arg(long, global = true)]
    pub noise_scale: Option<f64>,
    /// Worker threads for the parallel parts of the library.
    #[arg(long, global = true, env = "PLUME_THREADS")]
    pub threads: Option<usize>,
    /// More log output (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate synthetic wind, sensors, readings and truth from the config.
    Synth,
    /// Regularise the anemometer records onto the inversion grid.
    WindFit,
    /// Estimate emission rates up to the given stage.
    Invert {
        #[arg(long, value_enum, default_value = "positive")]
        stage: Stage,
    },
    /// Push the positive-stage estimate and its uncertainty onto the deposition grid.
    Propagate,
    /// Print the effective configuration as TOML.
    ShowConfig,
}

/// Resolve configuration and directories for `cli`.
pub fn pipeline_for(cli: &Cli) -> Result<Pipeline> {
    let (mut cfg, base, bundled) = match &cli.config {
        Some(path) => {
            let cfg = RunConfig::load(path)?;
            let base = path.parent().map(PathBuf::from).unwrap_or_default();
            (cfg, base, false)
        }
        None => {
            let base = cli.out.clone().unwrap_or_else(|| PathBuf::from(DEFAULT_RUN_DIR));
            (RunConfig::bundled(), base, true)
        }
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(scale) = cli.noise_scale {
        cfg.noise_scale = scale;
    }
    cfg.validate()?;
    let out = match &cli.out {
        Some(o) => o.clone(),
        None => io::resolve(&base, &cfg.paths.out_dir),
    };
    Ok(Pipeline::new(cfg, base, out, bundled))
}

/// Execute one command.
pub fn run(cli: &Cli) -> Result<()> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(CliError::Validation("thread count must be ≥ 1".into()));
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            log::debug!("thread pool already configured: {e}");
        }
    }
    let mut p = pipeline_for(cli)?;
    match &cli.command {
        Command::ShowConfig => {
            let text = toml::to_string(p.config()).map_err(|e| CliError::Validation(e.to_string()))?;
            print!("{text}");
            return Ok(());
        }
        Command::Synth => {
            p.synth()?;
        }
        Command::WindFit => {
            p.wind()?;
        }
        Command::Invert { stage } => {
            p.invert(*stage)?;
        }
        Command::Propagate => {
            p.propagate()?;
        }
    }
    p.finish()?;
    log::info!("artifacts written to {}", p.out_dir().display());
    Ok(())
}
