//! Steady-state Gaussian plume with gravitational settling and ground deposition.
//!
//! Each source is a point at the centroid of an emitting area. For one wind
//! sample the concentration field is the Ermak solution written in a frame whose
//! x̃-axis points downwind from the source; dispersion widths follow the Briggs
//! parameterisation for the six Pasquill stability classes.
//!
//! All quantities are SI: kg, m, s.

use std::f64::consts::{PI, SQRT_2};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::special::{erfc, erfcx};
use crate::windprep::WindSeries;

/// Dynamic viscosity of air (kg·m⁻¹·s⁻¹).
pub const AIR_VISCOSITY: f64 = 1.8e-5;

/// Gravitational acceleration (m·s⁻²).
pub const GRAVITY: f64 = 9.8;

/// Terminal fall speed of a small sphere in air (Stokes law).
pub fn settling_velocity(density: f64, diameter: f64) -> Result<f64> {
    if !density.is_finite() || density <= 0.0 {
        return Err(Error::invalid("density", format!("must be finite and > 0, got {density}")));
    }
    if !diameter.is_finite() || diameter < 0.0 {
        return Err(Error::invalid("diameter", format!("must be finite and ≥ 0, got {diameter}")));
    }
    Ok(density * GRAVITY * diameter * diameter / (18.0 * AIR_VISCOSITY))
}

/// Physical properties of one particulate species.
///
/// `w_set` is supplied by the caller and never recomputed from density and
/// diameter; use [`settling_velocity`] or [`ParticleProperties::with_stokes_settling`]
/// when the Stokes estimate is wanted.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParticleProperties {
    /// kg·m⁻³
    pub density: f64,
    /// m
    pub diameter: f64,
    /// Deposition velocity, m·s⁻¹.
    pub w_dep: f64,
    /// Settling velocity, m·s⁻¹.
    pub w_set: f64,
}

impl ParticleProperties {
    pub fn new(density: f64, diameter: f64, w_dep: f64, w_set: f64) -> Result<Self> {
        let p = Self {
            density,
            diameter,
            w_dep,
            w_set,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn with_stokes_settling(density: f64, diameter: f64, w_dep: f64) -> Result<Self> {
        let w_set = settling_velocity(density, diameter)?;
        Self::new(density, diameter, w_dep, w_set)
    }

    /// Lead monoxide as used for the smelter study: ρ = 9530 kg·m⁻³,
    /// d = 5 µm, W_dep = 0.005 m·s⁻¹, W_set = 0.0026 m·s⁻¹.
    pub fn lead_monoxide() -> Self {
        Self {
            density: 9530.0,
            diameter: 5.0e-6,
            w_dep: 0.005,
            w_set: 0.0026,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let check = |name: &'static str, v: f64, strict: bool| {
            if !v.is_finite() || v < 0.0 || (strict && v == 0.0) {
                Err(Error::invalid(name, format!("got {v}")))
            } else {
                Ok(())
            }
        };
        check("density", self.density, true)?;
        check("diameter", self.diameter, false)?;
        check("w_dep", self.w_dep, false)?;
        check("w_set", self.w_set, false)
    }

    /// Effective deposition velocity `W_o = W_dep − W_set/2` of the Ermak solution.
    pub fn effective_deposition(&self) -> f64 {
        self.w_dep - 0.5 * self.w_set
    }
}

/// Which dispersion width a Briggs coefficient triple belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    Crosswind,
    Vertical,
}

/// Coefficients of `σ(x̃) = a·x̃·(1 + b·x̃)^(−c)`; `b` is in m⁻¹.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BriggsCoefficients {
    pub a: f64,
    pub b: f64,
    pub c: f64,
}

const fn briggs(a: f64, b: f64, c: f64) -> BriggsCoefficients {
    BriggsCoefficients { a, b, c }
}

/// Rows A–F; each row is `[crosswind, vertical]`.
const BRIGGS_TABLE: [[BriggsCoefficients; 2]; 6] = [
    [briggs(0.22, 1.0e-4, 0.50), briggs(0.20, 0.0, 0.0)],
    [briggs(1.60, 1.0e-4, 0.50), briggs(1.2, 0.0, 0.0)],
    [briggs(0.11, 1.0e-4, 0.50), briggs(0.08, 2.0e-4, 0.5)],
    [briggs(0.08, 1.0e-4, 0.50), briggs(0.06, 1.5e-3, 0.5)],
    [briggs(0.06, 1.0e-4, 0.50), briggs(0.03, 3.0e-4, 1.0)],
    [briggs(0.04, 1.0e-4, 0.50), briggs(0.016, 3.0e-4, 1.0)],
];

/// Pasquill atmospheric stability class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum StabilityClass {
    A,
    B,
    C,
    D,
    E,
    F,
}

impl StabilityClass {
    pub const ALL: [StabilityClass; 6] = [
        StabilityClass::A,
        StabilityClass::B,
        StabilityClass::C,
        StabilityClass::D,
        StabilityClass::E,
        StabilityClass::F,
    ];

    fn row(self) -> usize {
        self as usize
    }

    pub fn coefficients(self, axis: Axis) -> BriggsCoefficients {
        let row = &BRIGGS_TABLE[self.row()];
        match axis {
            Axis::Crosswind => row[0],
            Axis::Vertical => row[1],
        }
    }
}

impl fmt::Display for StabilityClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}", self)
    }
}

impl FromStr for StabilityClass {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_uppercase().as_str() {
            "A" => Ok(StabilityClass::A),
            "B" => Ok(StabilityClass::B),
            "C" => Ok(StabilityClass::C),
            "D" => Ok(StabilityClass::D),
            "E" => Ok(StabilityClass::E),
            "F" => Ok(StabilityClass::F),
            other => Err(Error::invalid("stability_class", format!("unknown class `{other}`"))),
        }
    }
}

/// Briggs dispersion width for the given class and axis at downwind distance `x`.
pub fn briggs_sigma(class: StabilityClass, axis: Axis, x: f64) -> Result<f64> {
    if !(x >= 0.0) || !x.is_finite() {
        return Err(Error::Domain {
            name: "downwind distance",
            value: x,
            reason: "must be finite and ≥ 0",
        });
    }
    Ok(sigma_unchecked(class.coefficients(axis), x))
}

#[inline]
fn sigma_unchecked(c: BriggsCoefficients, x: f64) -> f64 {
    if c.c == 0.0 {
        c.a * x
    } else {
        c.a * x * (1.0 + c.b * x).powf(-c.c)
    }
}

/// Vertical eddy diffusivity consistent with the Briggs width, assuming a
/// constant diffusivity along the plume: `K = U·σ_z²/(2x̃)`.
pub fn eddy_diffusivity_z(class: StabilityClass, x: f64, wind_speed: f64) -> Result<f64> {
    if !(x > 0.0) || !x.is_finite() {
        return Err(Error::Domain {
            name: "downwind distance",
            value: x,
            reason: "must be finite and > 0",
        });
    }
    if !(wind_speed > 0.0) || !wind_speed.is_finite() {
        return Err(Error::Domain {
            name: "wind speed",
            value: wind_speed,
            reason: "must be finite and > 0",
        });
    }
    let sz = sigma_unchecked(class.coefficients(Axis::Vertical), x);
    Ok(wind_speed * sz * sz / (2.0 * x))
}

/// Centroid of an emitting area, treated as a point source.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SourceSite {
    pub id: String,
    /// m
    pub x: f64,
    /// m
    pub y: f64,
    /// Release height above ground, m.
    pub height: f64,
}

impl SourceSite {
    pub fn new(id: impl Into<String>, x: f64, y: f64, height: f64) -> Result<Self> {
        if !x.is_finite() || !y.is_finite() {
            return Err(Error::invalid("source centroid", "must be finite"));
        }
        if !height.is_finite() || height < 0.0 {
            return Err(Error::invalid("source height", format!("must be ≥ 0, got {height}")));
        }
        Ok(Self {
            id: id.into(),
            x,
            y,
            height,
        })
    }
}

/// A receptor expressed in the wind-aligned frame of one source.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LocalCoords {
    /// x̃, m
    pub downwind: f64,
    /// ỹ, m
    pub crosswind: f64,
    /// z̃ = z − source height, m
    pub vertical: f64,
    /// U, m·s⁻¹
    pub wind_speed: f64,
}

/// Translate `point` so the source centroid is at the horizontal origin and
/// rotate so that the x̃-axis points along the horizontal wind.
pub fn rotate_to_wind(point: [f64; 3], source: &SourceSite, wind: (f64, f64)) -> Result<LocalCoords> {
    let (ux, uy) = wind;
    let speed = ux.hypot(uy);
    if !(speed > 0.0) || !speed.is_finite() {
        return Err(Error::CalmWind { speed });
    }
    let (cos, sin) = (ux / speed, uy / speed);
    let dx = point[0] - source.x;
    let dy = point[1] - source.y;
    Ok(LocalCoords {
        downwind: cos * dx + sin * dy,
        crosswind: -sin * dx + cos * dy,
        vertical: point[2] - source.height,
        wind_speed: speed,
    })
}

/// Cut-offs that keep the kernel finite and the plume assumptions valid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct KernelOptions {
    /// Receptors with x̃ at or below this distance (m) get zero concentration.
    pub min_downwind: f64,
    /// Wind speeds below this (m·s⁻¹) are treated as calm and contribute nothing.
    pub calm_wind: f64,
}

impl Default for KernelOptions {
    fn default() -> Self {
        Self {
            min_downwind: 1.0,
            calm_wind: 0.1,
        }
    }
}

/// Concentration per unit emission rate (s·m⁻³) at `lc` for a source at height `z_src`.
///
/// Zero upwind (`x̃ ≤ 0`). Only the upwind cut-off is applied here; the
/// near-source cut-off of [`KernelOptions`] is applied by [`PlumeModel`].
pub fn plume_kernel(lc: &LocalCoords, p: &ParticleProperties, class: StabilityClass, z_src: f64) -> f64 {
    ermak(lc, p, class, z_src, 0.0)
}

fn ermak(lc: &LocalCoords, p: &ParticleProperties, class: StabilityClass, z_src: f64, min_downwind: f64) -> f64 {
    let x = lc.downwind;
    if !(x > min_downwind.max(0.0)) {
        return 0.0;
    }
    let u = lc.wind_speed;
    let sy = sigma_unchecked(class.coefficients(Axis::Crosswind), x);
    let sz = sigma_unchecked(class.coefficients(Axis::Vertical), x);
    let kz = u * sz * sz / (2.0 * x);
    let wo = p.effective_deposition();
    let y = lc.crosswind;
    let z = lc.vertical;
    // Height of the receptor above the image source below ground.
    let zr = z + 2.0 * z_src;

    let common = -y * y / (2.0 * sy * sy) - p.w_set * z / (2.0 * kz) - p.w_set * p.w_set * sz * sz / (8.0 * kz * kz);
    let direct = (common - z * z / (2.0 * sz * sz)).exp();
    let image_exponent = common - zr * zr / (2.0 * sz * sz);
    let image = image_exponent.exp();

    let deposition = if wo == 0.0 {
        0.0
    } else {
        let arg = wo * sz / (SQRT_2 * kz) + zr / (SQRT_2 * sz);
        // exp(W_o·zr/K + W_o²σ²/2K²)·erfc(arg), folded with the common factor in
        // log space. For arg ≥ 0 the exponent equals arg² − zr²/2σ², so the
        // product is erfcx(arg)·exp(−zr²/2σ²) and never overflows.
        let log_mag = if arg >= 0.0 {
            image_exponent + erfcx(arg).ln()
        } else {
            common + wo * zr / kz + wo * wo * sz * sz / (2.0 * kz * kz) + erfc(arg).ln()
        };
        (2.0 * PI).sqrt() * wo * sz / kz * log_mag.exp()
    };

    (direct + image - deposition) / (2.0 * PI * u * sy * sz)
}

/// Everything needed to evaluate unit-emission kernels for a set of sources
/// over a regularised wind series.
#[derive(Debug, Clone)]
pub struct PlumeModel {
    pub sites: Vec<SourceSite>,
    pub wind: WindSeries,
    pub particle: ParticleProperties,
    pub stability: StabilityClass,
    pub options: KernelOptions,
}

impl PlumeModel {
    pub fn new(
        sites: Vec<SourceSite>,
        wind: WindSeries,
        particle: ParticleProperties,
        stability: StabilityClass,
        options: KernelOptions,
    ) -> Result<Self> {
        particle.validate()?;
        Ok(Self {
            sites,
            wind,
            particle,
            stability,
            options,
        })
    }

    pub fn n_sources(&self) -> usize {
        self.sites.len()
    }

    pub fn n_times(&self) -> usize {
        self.wind.grid.len()
    }

    /// Indices of grid times whose wind is below the calm threshold.
    pub fn calm_steps(&self) -> Vec<usize> {
        (0..self.n_times())
            .filter(|&j| {
                let (ux, uy) = self.wind.components(j);
                !(ux.hypot(uy) >= self.options.calm_wind)
            })
            .collect()
    }

    /// Unit-emission kernel of source `site` at `point` for grid time `j`.
    /// Calm steps give zero.
    pub fn kernel(&self, point: [f64; 3], site: usize, j: usize) -> f64 {
        let (ux, uy) = self.wind.components(j);
        if !(ux.hypot(uy) >= self.options.calm_wind) {
            return 0.0;
        }
        let source = &self.sites[site];
        match rotate_to_wind(point, source, (ux, uy)) {
            Ok(lc) => ermak(&lc, &self.particle, self.stability, source.height, self.options.min_downwind),
            Err(_) => 0.0,
        }
    }

    /// Kernels of every source at `point` for every grid time, as a row-major
    /// `n_times × n_sources` buffer.
    pub fn kernel_table(&self, point: [f64; 3]) -> Vec<f64> {
        let ns = self.n_sources();
        let mut out = vec![0.0; self.n_times() * ns];
        for j in 0..self.n_times() {
            for i in 0..ns {
                out[j * ns + i] = self.kernel(point, i, j);
            }
        }
        out
    }

    /// Concentration (kg·m⁻³) at `point` and grid time `j` for per-source rates
    /// `rates[i] = q_i(t_j)`.
    pub fn concentration_at(&self, point: [f64; 3], j: usize, rates: &[f64]) -> Result<f64> {
        if rates.len() != self.n_sources() {
            return Err(Error::Dimension(format!(
                "{} rates for {} sources",
                rates.len(),
                self.n_sources()
            )));
        }
        if j >= self.n_times() {
            return Err(Error::Dimension(format!("time index {j} beyond grid of {}", self.n_times())));
        }
        if rates.iter().any(|q| !q.is_finite()) {
            return Err(Error::invalid("rates", "must be finite"));
        }
        Ok(rates
            .iter()
            .enumerate()
            .map(|(i, q)| q * self.kernel(point, i, j))
            .sum())
    }
}

/// Free-function form of [`PlumeModel::concentration_at`].
pub fn concentration_at(model: &PlumeModel, point: [f64; 3], j: usize, rates: &[f64]) -> Result<f64> {
    model.concentration_at(point, j, rates)
}
