//! Stage orchestration: the in-memory [`Problem`] and the file-backed [`Pipeline`].

use std::path::{Path, PathBuf};
use std::time::Instant;

use nalgebra::DVector;
use plume_core::inversion::{
    build_prior, gaussian_posterior, mle_constant, positive_posterior, positive_potential, ConstantEstimate,
    GaussianPosterior, Link, PositivePosterior, SmoothnessPrior,
};
use plume_core::observation::{assemble_f, ObservationOperator, TimeGrid};
use plume_core::sampling::{tune_beta, BetaTuning, SamplerConfig};
use plume_core::uqprop::{annualize, deposition_stats, DepositionGrid, DepositionOperator, LowRankFactors};
use plume_core::windprep::{fit_wind, CrossValidation, GpConfig};
use plume_core::{MeasurementSet, PlumeModel, SensorSpec, WindSeries};
use serde::{Deserialize, Serialize};

use crate::config::{streams, RunConfig, DEFAULT_SENSORS};
use crate::error::{CliError, Result};
use crate::io;
use crate::synthetic;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Constant,
    Smooth,
    Positive,
}

/// Forward model, observation operator and data on the inversion grid.
#[derive(Debug, Clone)]
pub struct Problem {
    pub grid: TimeGrid,
    pub model: PlumeModel,
    pub sensors: Vec<SensorSpec>,
    pub op: ObservationOperator,
    pub data: MeasurementSet,
}

impl Problem {
    /// Assemble `F` for the readings present in `data`; `data` should already
    /// carry any noise rescaling.
    pub fn new(cfg: &RunConfig, sensors: Vec<SensorSpec>, wind: WindSeries, data: MeasurementSet) -> Result<Self> {
        let grid = wind.grid;
        let model = PlumeModel::new(cfg.sites()?, wind, cfg.particle()?, cfg.model.stability, cfg.kernel_options())?;
        let calm = model.calm_steps();
        if !calm.is_empty() {
            log::warn!("{} calm time steps contribute nothing to the forward model", calm.len());
        }
        let full = assemble_f(&sensors, &model)?;
        let op = if full.rows == data.rows {
            full
        } else {
            full.select_rows(&data.rows)?
        };
        Ok(Self {
            grid,
            model,
            sensors,
            op,
            data,
        })
    }

    pub fn n_sources(&self) -> usize {
        self.model.n_sources()
    }

    pub fn source_ids(&self) -> Vec<String> {
        self.model.sites.iter().map(|s| s.id.clone()).collect()
    }

    /// The same problem without the listed sensors.
    pub fn without_sensors(&self, ids: &[&str]) -> Result<Problem> {
        let drop: Vec<usize> = ids
            .iter()
            .map(|id| {
                self.sensors
                    .iter()
                    .position(|s| s.id == *id)
                    .ok_or_else(|| CliError::Validation(format!("unknown sensor `{id}`")))
            })
            .collect::<Result<_>>()?;
        let data = self.data.without_sensors(&drop);
        let op = self.op.select_rows(&data.rows)?;
        Ok(Problem {
            op,
            data,
            ..self.clone()
        })
    }

    pub fn constant(&self) -> Result<ConstantEstimate> {
        Ok(mle_constant(
            &self.op.matrix,
            self.n_sources(),
            self.grid.len(),
            &self.data.values(),
            &self.data.noise_variance(),
        )?)
    }

    pub fn prior(&self, cfg: &RunConfig) -> Result<SmoothnessPrior> {
        Ok(build_prior(&cfg.prior_spec(self.grid)?)?)
    }

    pub fn smooth(&self, cfg: &RunConfig, constant: &DVector<f64>) -> Result<GaussianPosterior> {
        let prior = self.prior(cfg)?;
        Ok(gaussian_posterior(
            &self.op.matrix,
            &self.data.values(),
            &self.data.noise_variance(),
            prior.covariance(),
            constant,
        )?)
    }

    /// Pilot-tune β for the positive stage around the smooth mean.
    pub fn tune(&self, cfg: &RunConfig, smooth_mean: &DVector<f64>) -> Result<BetaTuning> {
        let prior = self.prior(cfg)?;
        let phi = positive_potential(&self.op.matrix, &self.data.values(), &self.data.noise_variance(), Link::Clip)?;
        Ok(tune_beta(
            phi,
            &Link::Clip.apply(smooth_mean),
            &prior,
            cfg.sampler.tune_band,
            cfg.sampler.pilot_steps,
            cfg.seed,
        )?)
    }

    pub fn positive(
        &self,
        cfg: &RunConfig,
        smooth_mean: &DVector<f64>,
        sampler: &SamplerConfig,
    ) -> Result<PositivePosterior> {
        let prior = self.prior(cfg)?;
        Ok(positive_posterior(
            &self.op.matrix,
            &self.data.values(),
            &self.data.noise_variance(),
            &prior,
            smooth_mean,
            sampler,
            Link::Clip,
        )?)
    }
}

/// Diagnostics and annual totals recorded per stage.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunMetadata {
    pub config_hash: String,
    pub config: Option<RunConfig>,
    /// How Σ was obtained.
    pub noise_model: Option<String>,
    /// Stages computed in this invocation, in order.
    pub computed: Vec<String>,
    /// Stages whose artifacts were reused from an earlier invocation.
    pub reused: Vec<String>,
    pub wind: Option<WindMeta>,
    pub constant: Option<ConstantMeta>,
    pub smooth: Option<SmoothMeta>,
    pub positive: Option<PositiveMeta>,
    pub propagate: Option<PropagateMeta>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindMeta {
    pub u_x: GpConfig,
    pub u_y: GpConfig,
    pub n_records: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstantMeta {
    pub rates_kg_s: Vec<f64>,
    pub std_kg_s: Vec<f64>,
    pub annual_tonne_per_year: f64,
    pub kkt_residual: Option<f64>,
    pub non_unique: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SmoothMeta {
    pub annual_tonne_per_year: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PositiveMeta {
    pub beta: f64,
    pub tuning: Option<BetaTuning>,
    pub acceptance_rate: f64,
    pub effective_sample_size: f64,
    pub n_steps: usize,
    pub burn_in: usize,
    pub stored_samples: usize,
    pub annual_tonne_per_year: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PropagateMeta {
    pub n_e: usize,
    pub max_mean_kg_m2: f64,
    pub max_std_kg_m2: f64,
}

/// Covariance factors and diagnostics of the positive stage, kept for `propagate`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PositiveArtifact {
    pub config_hash: String,
    pub diagnostics: PositiveMeta,
    pub factors: LowRankFactors,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct WindFitArtifact {
    config_hash: String,
    n_records: usize,
    u_x: CrossValidation,
    u_y: CrossValidation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct GridSidecar {
    config_hash: String,
    grid: plume_core::uqprop::GridSpec,
    units: String,
    n_e: usize,
    eigenvalues: Vec<f64>,
}

/// Artifact file names inside the output directory.
pub mod artifacts {
    pub const REGULAR_WIND: &str = "wind_regularized.csv";
    pub const WIND_FIT: &str = "wind_fit.json";
    pub const CONSTANT: &str = "emissions_constant.csv";
    pub const SMOOTH: &str = "emissions_smooth.csv";
    pub const POSITIVE: &str = "emissions_positive.csv";
    pub const POSITIVE_FACTORS: &str = "positive_factors.json";
    pub const GRID: &str = "deposition_grid.csv";
    pub const GRID_SIDECAR: &str = "deposition_grid.json";
    pub const METADATA: &str = "run_metadata.json";
    pub const TIMING: &str = "timing.json";
    pub const TRUTH: &str = "truth.csv";
}

/// File-backed pipeline. Each stage reuses an earlier artifact when its
/// config hash matches and recomputes (and rewrites) it otherwise.
pub struct Pipeline {
    cfg: RunConfig,
    base: PathBuf,
    out: PathBuf,
    bundled: bool,
    hash: String,
    meta: RunMetadata,
    timing: Vec<(String, f64)>,
    problem: Option<Problem>,
}

impl Pipeline {
    /// `base` resolves relative input paths; `out` receives the artifacts.
    pub fn new(cfg: RunConfig, base: PathBuf, out: PathBuf, bundled: bool) -> Self {
        let hash = cfg.hash();
        let meta = RunMetadata {
            config_hash: hash.clone(),
            config: Some(cfg.clone()),
            ..RunMetadata::default()
        };
        Self {
            cfg,
            base,
            out,
            bundled,
            hash,
            meta,
            timing: Vec::new(),
            problem: None,
        }
    }

    pub fn config(&self) -> &RunConfig {
        &self.cfg
    }

    pub fn hash(&self) -> &str {
        &self.hash
    }

    pub fn out_dir(&self) -> &Path {
        &self.out
    }

    pub fn metadata(&self) -> &RunMetadata {
        &self.meta
    }

    fn input(&self, p: &Path) -> PathBuf {
        io::resolve(&self.base, p)
    }

    fn artifact(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }

    fn truth_path(&self) -> PathBuf {
        match &self.cfg.paths.truth {
            Some(p) => self.input(p),
            None => self.artifact(artifacts::TRUTH),
        }
    }

    fn fresh(&self, path: &Path) -> bool {
        path.exists() && matches!(io::read_hash(path), Ok(Some(h)) if h == self.hash)
    }

    fn timed<T>(&mut self, label: &str, f: impl FnOnce(&mut Self) -> Result<T>) -> Result<T> {
        let start = Instant::now();
        let out = f(self)?;
        self.timing.push((label.to_string(), start.elapsed().as_secs_f64()));
        Ok(out)
    }

    fn sensors(&self) -> Result<Vec<SensorSpec>> {
        io::load_sensors(&self.input(&self.cfg.paths.sensors))
    }

    /// Generate the synthetic data set and write wind, sensors, readings,
    /// noise variances and truth.
    pub fn synth(&mut self) -> Result<synthetic::SyntheticData> {
        self.timed("synth", |p| {
            let sensor_path = p.input(&p.cfg.paths.sensors);
            let sensors = if p.bundled {
                let s = io::parse_sensors(DEFAULT_SENSORS)?;
                io::write_sensors(&sensor_path, &p.hash, &s)?;
                s
            } else {
                p.sensors()?
            };
            let data = synthetic::generate(&p.cfg, &sensors)?;
            io::write_wind_csv(&p.input(&p.cfg.paths.wind), &p.hash, &data.anemometer)?;
            io::write_measurements(&p.input(&p.cfg.paths.measurements), &p.hash, &data.measurements)?;
            if let Some(noise) = &p.cfg.paths.noise {
                io::write_noise(&p.input(noise), &p.hash, &data.measurements)?;
            }
            io::write_truth(&p.truth_path(), &p.hash, &source_ids(&p.cfg), &data.generation_grid, &data.truth)?;
            p.meta.computed.push("synth".into());
            Ok(data)
        })
    }

    /// Make sure the input files exist, generating the bundled case on demand.
    fn ensure_inputs(&mut self) -> Result<()> {
        let paths = &self.cfg.paths;
        let missing = [&paths.wind, &paths.sensors, &paths.measurements]
            .iter()
            .any(|p| !self.input(p).exists());
        if missing && self.bundled {
            log::info!("bundled case: input files missing, generating the synthetic data first");
            self.synth()?;
        }
        Ok(())
    }

    /// Regularised wind on the inversion grid.
    pub fn wind(&mut self) -> Result<WindSeries> {
        self.ensure_inputs()?;
        let grid = self.cfg.inversion_grid()?;
        let path = self.artifact(artifacts::REGULAR_WIND);
        if self.fresh(&path) {
            log::info!("reusing {}", path.display());
            self.meta.reused.push("wind-fit".into());
            if let Ok(fit) = io::read_json::<WindFitArtifact>(&self.artifact(artifacts::WIND_FIT)) {
                self.meta.wind = Some(WindMeta {
                    u_x: fit.u_x.best,
                    u_y: fit.u_y.best,
                    n_records: fit.n_records,
                });
            }
            return io::load_regular_wind(&path, grid);
        }
        self.timed("wind-fit", |p| {
            let records = io::load_wind_csv(&p.input(&p.cfg.paths.wind))?;
            log::info!("fitting wind GP to {} records", records.len());
            let fitted = fit_wind(
                &records,
                p.cfg.wind_fit.search.as_ref(),
                streams::derive(p.cfg.seed, streams::WIND_CV),
            )?;
            let wind = fitted.evaluate(&grid)?;
            io::write_regular_wind(&path, &p.hash, &wind)?;
            io::write_json(
                &p.artifact(artifacts::WIND_FIT),
                &WindFitArtifact {
                    config_hash: p.hash.clone(),
                    n_records: records.len(),
                    u_x: fitted.cv_x.clone(),
                    u_y: fitted.cv_y.clone(),
                },
            )?;
            p.meta.wind = Some(WindMeta {
                u_x: fitted.cv_x.best,
                u_y: fitted.cv_y.best,
                n_records: records.len(),
            });
            p.meta.computed.push("wind-fit".into());
            Ok(wind)
        })
    }

    /// Sensors, wind and data assembled on the inversion grid.
    pub fn problem(&mut self) -> Result<Problem> {
        if let Some(p) = &self.problem {
            return Ok(p.clone());
        }
        let wind = self.wind()?;
        let sensors = self.sensors()?;
        let mut data = io::load_measurements(
            &self.input(&self.cfg.paths.measurements),
            &sensors,
            self.cfg.model.noise_floor,
        )?;
        let mut noise_model = "per-sensor variance of the measured values divided by SNR".to_string();
        if let Some(noise) = &self.cfg.paths.noise {
            let path = self.input(noise);
            if path.exists() {
                io::apply_noise_file(&path, &mut data)?;
                noise_model = format!("noise variances read from {}", noise.display());
            } else {
                log::warn!("noise file {} not found; estimating Σ from the readings", path.display());
            }
        }
        if self.cfg.noise_scale != 1.0 {
            data = data.with_noise_scale(self.cfg.noise_scale)?;
            noise_model = format!("{noise_model}, standard deviations scaled by {}", self.cfg.noise_scale);
        }
        log::info!("Σ: {noise_model}");
        self.meta.noise_model = Some(noise_model);
        let problem = self.timed("assemble", |p| Problem::new(&p.cfg, sensors, wind, data))?;
        log::info!(
            "observation operator: {} readings × {} unknowns",
            problem.op.n_rows(),
            problem.op.n_cols()
        );
        self.problem = Some(problem.clone());
        Ok(problem)
    }

    fn load_stage(&self, name: &str, grid: &TimeGrid) -> Option<io::EmissionFile> {
        let path = self.artifact(name);
        if !self.fresh(&path) {
            return None;
        }
        match io::load_emissions(&path, &source_ids(&self.cfg), grid) {
            Ok(f) => Some(f),
            Err(e) => {
                log::warn!("ignoring unreadable artifact {}: {e}", path.display());
                None
            }
        }
    }

    pub fn constant(&mut self) -> Result<DVector<f64>> {
        let grid = self.cfg.inversion_grid()?;
        if let Some(f) = self.load_stage(artifacts::CONSTANT, &grid) {
            log::info!("reusing constant-stage estimate");
            self.meta.reused.push("constant".into());
            let nt = grid.len();
            self.meta.constant = Some(ConstantMeta {
                rates_kg_s: (0..self.cfg.sources.len()).map(|i| f.mean[i * nt]).collect(),
                std_kg_s: (0..self.cfg.sources.len()).map(|i| f.std[i * nt]).collect(),
                annual_tonne_per_year: annualize(&f.mean, nt)?,
                kkt_residual: None,
                non_unique: None,
            });
            return Ok(f.mean);
        }
        let problem = self.problem()?;
        self.timed("constant", |p| {
            let est = problem.constant()?;
            let nt = problem.grid.len();
            let std = plume_core::inversion::expand_constant(&est.std, nt);
            io::write_emissions(&p.artifact(artifacts::CONSTANT), &p.hash, &problem.source_ids(), &problem.grid, &est.q, &std)?;
            p.meta.constant = Some(ConstantMeta {
                rates_kg_s: est.rates.iter().copied().collect(),
                std_kg_s: est.std.iter().copied().collect(),
                annual_tonne_per_year: annualize(&est.q, nt)?,
                kkt_residual: Some(est.kkt_residual),
                non_unique: Some(est.non_unique),
            });
            p.meta.computed.push("constant".into());
            Ok(est.q)
        })
    }

    pub fn smooth(&mut self) -> Result<DVector<f64>> {
        let grid = self.cfg.inversion_grid()?;
        if let Some(f) = self.load_stage(artifacts::SMOOTH, &grid) {
            log::info!("reusing smooth-stage estimate");
            self.meta.reused.push("smooth".into());
            self.meta.smooth = Some(SmoothMeta {
                annual_tonne_per_year: annualize(&f.mean, grid.len())?,
            });
            return Ok(f.mean);
        }
        log::info!("smooth stage needs the constant estimate");
        let constant = self.constant()?;
        let problem = self.problem()?;
        self.timed("smooth", |p| {
            let post = problem.smooth(&p.cfg, &constant)?;
            io::write_emissions(&p.artifact(artifacts::SMOOTH), &p.hash, &problem.source_ids(), &grid, &post.mean, &post.std)?;
            p.meta.smooth = Some(SmoothMeta {
                annual_tonne_per_year: annualize(&post.mean, grid.len())?,
            });
            p.meta.computed.push("smooth".into());
            Ok(post.mean)
        })
    }

    pub fn positive(&mut self) -> Result<(DVector<f64>, LowRankFactors)> {
        let grid = self.cfg.inversion_grid()?;
        let factors_path = self.artifact(artifacts::POSITIVE_FACTORS);
        if let Some(f) = self.load_stage(artifacts::POSITIVE, &grid) {
            match io::read_json::<PositiveArtifact>(&factors_path) {
                Ok(a) if a.config_hash == self.hash => {
                    log::info!("reusing positive-stage estimate");
                    self.meta.reused.push("positive".into());
                    self.meta.positive = Some(a.diagnostics);
                    return Ok((f.mean, a.factors));
                }
                _ => log::info!("positive-stage factors missing or stale; rerunning the stage"),
            }
        }
        log::info!("positive stage needs the smooth estimate");
        let smooth = self.smooth()?;
        let problem = self.problem()?;
        self.timed("positive", |p| {
            let mut sampler = p.cfg.sampler_config();
            let tuning = if p.cfg.sampler.tune {
                let t = problem.tune(&p.cfg, &smooth)?;
                log::info!("tuned β = {:.4} (pilot acceptance {:.3})", t.beta, t.acceptance_rate);
                sampler.beta = t.beta;
                Some(t)
            } else {
                None
            };
            log::info!("running pCN: {} steps at β = {}", sampler.n_steps, sampler.beta);
            let post = problem.positive(&p.cfg, &smooth, &sampler)?;
            log::info!("acceptance rate {:.3}, ESS {:.1}", post.acceptance_rate, post.ess);
            let n_e = p.cfg.grid.n_e.min(post.mean.len());
            let factors = LowRankFactors::from_sample_factor(&post.sample_factor, Some(n_e))?;
            io::write_emissions(&p.artifact(artifacts::POSITIVE), &p.hash, &problem.source_ids(), &grid, &post.mean, &post.std)?;
            let diagnostics = PositiveMeta {
                beta: post.beta,
                tuning,
                acceptance_rate: post.acceptance_rate,
                effective_sample_size: post.ess,
                n_steps: post.n_steps,
                burn_in: post.burn_in,
                stored_samples: post.sample_factor.ncols(),
                annual_tonne_per_year: annualize(&post.mean, grid.len())?,
            };
            io::write_json(
                &factors_path,
                &PositiveArtifact {
                    config_hash: p.hash.clone(),
                    diagnostics: diagnostics.clone(),
                    factors: factors.clone(),
                },
            )?;
            p.meta.positive = Some(diagnostics);
            p.meta.computed.push("positive".into());
            Ok((post.mean, factors))
        })
    }

    /// Run the inversion up to and including `stage`.
    pub fn invert(&mut self, stage: Stage) -> Result<DVector<f64>> {
        match stage {
            Stage::Constant => self.constant(),
            Stage::Smooth => self.smooth(),
            Stage::Positive => Ok(self.positive()?.0),
        }
    }

    pub fn propagate(&mut self) -> Result<DepositionGrid> {
        if !self.artifact(artifacts::POSITIVE).exists() {
            log::info!("no positive-stage artifacts; running every stage first");
        }
        let (q, factors) = self.positive()?;
        let problem = self.problem()?;
        self.timed("propagate", |p| {
            let h = DepositionOperator::new(p.cfg.grid_spec()?, &problem.model)?;
            let dep = deposition_stats(&h, &q, &factors)?;
            let mg = p.cfg.units.deposition_mg;
            io::write_grid(&p.artifact(artifacts::GRID), &p.hash, &dep, mg)?;
            io::write_json(
                &p.artifact(artifacts::GRID_SIDECAR),
                &GridSidecar {
                    config_hash: p.hash.clone(),
                    grid: dep.grid,
                    units: if mg { "mg/m^2" } else { "kg/m^2" }.into(),
                    n_e: dep.n_e,
                    eigenvalues: dep.eigenvalues.clone(),
                },
            )?;
            p.meta.propagate = Some(PropagateMeta {
                n_e: dep.n_e,
                max_mean_kg_m2: dep.mean.iter().copied().fold(0.0, f64::max),
                max_std_kg_m2: dep.std.iter().copied().fold(0.0, f64::max),
            });
            p.meta.computed.push("propagate".into());
            Ok(dep)
        })
    }

    /// Write `run_metadata.json` and `timing.json`.
    pub fn finish(&self) -> Result<()> {
        io::write_json(&self.artifact(artifacts::METADATA), &self.meta)?;
        let timing: serde_json::Map<String, serde_json::Value> = self
            .timing
            .iter()
            .map(|(k, v)| (format!("{k}_s"), serde_json::json!(v)))
            .collect();
        io::write_json(&self.artifact(artifacts::TIMING), &timing)?;
        Ok(())
    }
}

pub fn source_ids(cfg: &RunConfig) -> Vec<String> {
    cfg.sources.iter().map(|s| s.id.clone()).collect()
}

/// Pearson correlation of two equally long series.
pub fn correlation(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
    let cov: f64 = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = a.iter().map(|x| (x - ma).powi(2)).sum();
    let vb: f64 = b.iter().map(|y| (y - mb).powi(2)).sum();
    cov / (va * vb).sqrt()
}

/// Synthetic case held in memory, for experiments and tests that do not
/// need the file layer.
pub struct InMemoryCase {
    pub cfg: RunConfig,
    pub data: synthetic::SyntheticData,
    pub problem: Problem,
    /// Truth averaged onto the inversion grid.
    pub truth: DVector<f64>,
}

impl InMemoryCase {
    pub fn new(cfg: RunConfig, sensors: Vec<SensorSpec>) -> Result<Self> {
        let data = synthetic::generate(&cfg, &sensors)?;
        let grid = cfg.inversion_grid()?;
        let fitted = fit_wind(
            &data.anemometer,
            cfg.wind_fit.search.as_ref(),
            streams::derive(cfg.seed, streams::WIND_CV),
        )?;
        let wind = fitted.evaluate(&grid)?;
        let measurements = data.measurements.with_noise_scale(cfg.noise_scale)?;
        let problem = Problem::new(&cfg, sensors, wind, measurements)?;
        let truth = synthetic::average_onto(&data.truth, &data.generation_grid, &grid)?;
        Ok(Self {
            cfg,
            data,
            problem,
            truth,
        })
    }

    pub fn bundled() -> Result<Self> {
        Self::new(RunConfig::bundled(), io::parse_sensors(DEFAULT_SENSORS)?)
    }
}
