//! Run configuration read from TOML.

use std::path::{Path, PathBuf};

use plume_core::inversion::PriorSpec;
use plume_core::observation::TimeGrid;
use plume_core::sampling::SamplerConfig;
use plume_core::uqprop::GridSpec;
use plume_core::windprep::GpSearchSpace;
use plume_core::{KernelOptions, ParticleProperties, SourceSite, StabilityClass};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{CliError, Result};
use crate::timefmt;

/// The bundled synthetic case.
pub const DEFAULT_CASE: &str = include_str!("../assets/default_case.toml");
/// Sensor layout used by the bundled case.
pub const DEFAULT_SENSORS: &str = include_str!("../assets/default_sensors.toml");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Master seed; every random stream in the run is derived from it.
    #[serde(default)]
    pub seed: u64,
    /// Multiplies every noise standard deviation before inversion.
    #[serde(default = "one")]
    pub noise_scale: f64,
    pub paths: Paths,
    pub time: TimeSettings,
    #[serde(default)]
    pub prior: PriorSettings,
    #[serde(default)]
    pub sampler: SamplerSettings,
    #[serde(default)]
    pub wind_fit: WindFitSettings,
    pub grid: GridSettings,
    #[serde(default)]
    pub particle: ParticleSettings,
    #[serde(default)]
    pub model: ModelSettings,
    #[serde(default)]
    pub units: UnitSettings,
    #[serde(rename = "source")]
    pub sources: Vec<SourceSettings>,
    #[serde(default)]
    pub synthetic: Option<SyntheticSpec>,
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Paths {
    pub wind: PathBuf,
    pub sensors: PathBuf,
    pub measurements: PathBuf,
    /// Optional per-reading noise variances overriding the SNR estimate.
    #[serde(default)]
    pub noise: Option<PathBuf>,
    /// Optional true rates, written by `synth` and used only for scoring.
    #[serde(default)]
    pub truth: Option<PathBuf>,
    pub out_dir: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeSettings {
    /// ISO-8601 start of the inversion period.
    pub start: String,
    /// Length of the period in seconds.
    pub span_s: f64,
    #[serde(default = "default_dt_inversion")]
    pub dt_inversion: f64,
    #[serde(default = "default_dt_generation")]
    pub dt_generation: f64,
    /// Allow synthetic data to be generated on the inversion grid.
    #[serde(default)]
    pub allow_inverse_crime: bool,
}

fn default_dt_inversion() -> f64 {
    3600.0
}

fn default_dt_generation() -> f64 {
    1800.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PriorSettings {
    pub alpha: f64,
    pub gamma: f64,
}

impl Default for PriorSettings {
    fn default() -> Self {
        Self { alpha: 1.0, gamma: 5e-3 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SamplerSettings {
    pub beta: f64,
    pub n_steps: usize,
    pub burn_in_fraction: f64,
    pub max_stored_samples: usize,
    /// Replace `beta` by a pilot-tuned value before the main chain.
    pub tune: bool,
    pub tune_band: (f64, f64),
    pub pilot_steps: usize,
}

impl Default for SamplerSettings {
    fn default() -> Self {
        let d = SamplerConfig::default();
        Self {
            beta: d.beta,
            n_steps: d.n_steps,
            burn_in_fraction: d.burn_in_fraction,
            max_stored_samples: d.max_stored_samples,
            tune: false,
            tune_band: (0.25, 0.35),
            pilot_steps: 5000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WindFitSettings {
    /// Explicit hyperparameter grid; derived from the data when absent.
    pub search: Option<GpSearchSpace>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSettings {
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
    #[serde(default = "default_cells")]
    pub n_x: usize,
    #[serde(default = "default_cells")]
    pub n_y: usize,
    /// Retained eigenpairs of the emission covariance.
    #[serde(default = "default_cells")]
    pub n_e: usize,
}

fn default_cells() -> usize {
    100
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ParticleSettings {
    pub density: f64,
    pub diameter: f64,
    pub w_dep: f64,
    /// Settling velocity; Stokes law from density and diameter when absent.
    pub w_set: Option<f64>,
}

impl Default for ParticleSettings {
    fn default() -> Self {
        let p = ParticleProperties::lead_monoxide();
        Self {
            density: p.density,
            diameter: p.diameter,
            w_dep: p.w_dep,
            w_set: Some(p.w_set),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelSettings {
    pub stability: StabilityClass,
    /// Kernel cutoff distance downwind of a source, m.
    pub min_downwind: f64,
    /// Speeds below this are treated as calm, m·s⁻¹.
    pub calm_wind: f64,
    /// Lower bound on any noise standard deviation.
    pub noise_floor: f64,
}

impl Default for ModelSettings {
    fn default() -> Self {
        let k = KernelOptions::default();
        Self {
            stability: StabilityClass::D,
            min_downwind: k.min_downwind,
            calm_wind: k.calm_wind,
            noise_floor: 1e-30,
        }
    }
}

/// Display units of the output files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct UnitSettings {
    /// Write deposition in mg·m⁻² (otherwise kg·m⁻²).
    pub deposition_mg: bool,
}

impl Default for UnitSettings {
    fn default() -> Self {
        Self { deposition_mg: true }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SourceSettings {
    pub id: String,
    pub x_m: f64,
    pub y_m: f64,
    #[serde(default)]
    pub height_m: f64,
}

/// Ground truth and weather for a synthetic twin.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticSpec {
    /// Clip the sinusoids at zero.
    #[serde(default = "yes")]
    pub clip: bool,
    pub wind: SyntheticWind,
    #[serde(rename = "rate")]
    pub rates: Vec<SourceSignal>,
}

fn yes() -> bool {
    true
}

/// `q(t) = offset + amplitude·sin(ω t + φ)` with `t` measured from the period start.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SourceSignal {
    pub source: String,
    /// kg·s⁻¹
    pub amplitude: f64,
    /// rad·s⁻¹
    pub omega: f64,
    /// rad
    #[serde(default)]
    pub phase: f64,
    /// kg·s⁻¹
    pub offset: f64,
}

/// Smooth true wind plus the noise of the simulated anemometer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticWind {
    pub mean_speed: f64,
    /// Amplitude of the daily speed cycle, m·s⁻¹.
    pub daily_speed_swing: f64,
    /// Mean direction the wind blows from, degrees clockwise from north.
    pub mean_direction_from: f64,
    /// Amplitude of the daily direction cycle, degrees.
    pub daily_direction_swing: f64,
    /// Seconds between anemometer records.
    #[serde(default = "default_record_interval")]
    pub record_interval_s: f64,
    #[serde(default)]
    pub speed_noise: f64,
    #[serde(default)]
    pub direction_noise_deg: f64,
}

fn default_record_interval() -> f64 {
    600.0
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| CliError::Path {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_toml(&text)
    }

    pub fn bundled() -> Self {
        Self::from_toml(DEFAULT_CASE).expect("bundled case is valid")
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(CliError::Validation(msg));
        if !(self.noise_scale > 0.0) || !self.noise_scale.is_finite() {
            return bad(format!("noise_scale must be > 0, got {}", self.noise_scale));
        }
        let t = &self.time;
        timefmt::parse(&t.start)?;
        for (name, v) in [
            ("time.span_s", t.span_s),
            ("time.dt_inversion", t.dt_inversion),
            ("time.dt_generation", t.dt_generation),
        ] {
            if !(v > 0.0) || !v.is_finite() {
                return bad(format!("{name} must be positive, got {v}"));
            }
        }
        if self.sources.is_empty() {
            return bad("at least one [[source]] is required".into());
        }
        for (k, s) in self.sources.iter().enumerate() {
            if self.sources[..k].iter().any(|o| o.id == s.id) {
                return bad(format!("duplicate source id `{}`", s.id));
            }
        }
        self.sites()?;
        self.particle()?;
        self.prior_spec(self.inversion_grid()?)?.validate()?;
        self.sampler_config().validate()?;
        self.grid_spec()?;
        if self.grid.n_e == 0 {
            return bad("grid.n_e must be ≥ 1".into());
        }
        let (lo, hi) = self.sampler.tune_band;
        if !(0.0 <= lo && lo < hi && hi <= 1.0) {
            return bad(format!("sampler.tune_band must satisfy 0 ≤ low < high ≤ 1, got {:?}", (lo, hi)));
        }
        if let Some(syn) = &self.synthetic {
            if syn.rates.len() != self.sources.len() {
                return bad(format!(
                    "synthetic case has {} rate signals for {} sources",
                    syn.rates.len(),
                    self.sources.len()
                ));
            }
            for (sig, src) in syn.rates.iter().zip(&self.sources) {
                if sig.source != src.id {
                    return bad(format!(
                        "synthetic rate `{}` does not match source `{}` (same order required)",
                        sig.source, src.id
                    ));
                }
                if !(sig.amplitude >= 0.0) || ![sig.omega, sig.phase, sig.offset].iter().all(|v| v.is_finite()) {
                    return bad(format!("synthetic rate `{}`: amplitude must be ≥ 0 and all terms finite", sig.source));
                }
            }
            let w = &syn.wind;
            if !(w.mean_speed > 0.0) || !(w.record_interval_s > 0.0) || w.speed_noise < 0.0 || w.direction_noise_deg < 0.0
            {
                return bad("synthetic wind: mean speed and record interval must be > 0, noise ≥ 0".into());
            }
        }
        Ok(())
    }

    pub fn start(&self) -> f64 {
        timefmt::parse(&self.time.start).expect("validated")
    }

    pub fn inversion_grid(&self) -> Result<TimeGrid> {
        Ok(TimeGrid::covering(timefmt::parse(&self.time.start)?, self.time.span_s, self.time.dt_inversion)?)
    }

    pub fn generation_grid(&self) -> Result<TimeGrid> {
        Ok(TimeGrid::covering(timefmt::parse(&self.time.start)?, self.time.span_s, self.time.dt_generation)?)
    }

    pub fn sites(&self) -> Result<Vec<SourceSite>> {
        self.sources
            .iter()
            .map(|s| SourceSite::new(s.id.clone(), s.x_m, s.y_m, s.height_m).map_err(CliError::from))
            .collect()
    }

    pub fn particle(&self) -> Result<ParticleProperties> {
        let p = &self.particle;
        Ok(match p.w_set {
            Some(w_set) => ParticleProperties::new(p.density, p.diameter, p.w_dep, w_set)?,
            None => ParticleProperties::with_stokes_settling(p.density, p.diameter, p.w_dep)?,
        })
    }

    pub fn kernel_options(&self) -> KernelOptions {
        KernelOptions {
            min_downwind: self.model.min_downwind,
            calm_wind: self.model.calm_wind,
        }
    }

    pub fn prior_spec(&self, grid: TimeGrid) -> Result<PriorSpec> {
        let spec = PriorSpec {
            alpha: self.prior.alpha,
            gamma: self.prior.gamma,
            grid,
            n_sources: self.sources.len(),
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn sampler_config(&self) -> SamplerConfig {
        SamplerConfig {
            beta: self.sampler.beta,
            n_steps: self.sampler.n_steps,
            burn_in_fraction: self.sampler.burn_in_fraction,
            seed: self.seed,
            max_stored_samples: self.sampler.max_stored_samples,
            ..SamplerConfig::default()
        }
    }

    pub fn grid_spec(&self) -> Result<GridSpec> {
        let g = &self.grid;
        Ok(GridSpec::new((g.x_min, g.x_max), (g.y_min, g.y_max), g.n_x, g.n_y)?)
    }

    /// SHA-256 of the canonical JSON form of the configuration.
    pub fn hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("config serialises");
        hex::encode(Sha256::digest(&json))
    }
}

/// Derived seeds for the independent random streams of a run.
pub mod streams {
    pub const MEASUREMENT_NOISE: u64 = 1;
    pub const ANEMOMETER_NOISE: u64 = 2;
    pub const WIND_CV: u64 = 3;

    pub fn derive(seed: u64, stream: u64) -> u64 {
        seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(stream)
    }
}
