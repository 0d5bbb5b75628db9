//! Synthetic twin: sinusoidal true rates, a smooth true wind, a noisy
//! anemometer and noisy sensor readings generated on a finer time grid than
//! the inversion uses.

use std::f64::consts::PI;

use nalgebra::DVector;
use plume_core::observation::{assemble_f, simulate_measurements, TimeGrid};
use plume_core::windprep::to_components;
use plume_core::{MeasurementSet, PlumeModel, RawWindRecord, SensorSpec, WindSeries};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::config::{streams, RunConfig, SourceSignal, SyntheticSpec, SyntheticWind};
use crate::error::{CliError, Result};

const DAY: f64 = 86_400.0;

/// Everything produced for one synthetic run.
#[derive(Debug, Clone)]
pub struct SyntheticData {
    pub generation_grid: TimeGrid,
    /// True rates on the generation grid, source-major.
    pub truth: DVector<f64>,
    pub true_wind: WindSeries,
    pub anemometer: Vec<RawWindRecord>,
    /// Noisy readings with Σ from the clean-signal variance.
    pub measurements: MeasurementSet,
}

/// `max(0, offset + amplitude·sin(ω t + φ))` (unclipped if `clip` is off), `t` from `t0`.
pub fn signal_value(s: &SourceSignal, t: f64, clip: bool) -> f64 {
    let v = s.offset + s.amplitude * (s.omega * t + s.phase).sin();
    if clip {
        v.max(0.0)
    } else {
        v
    }
}

pub fn true_rates(spec: &SyntheticSpec, grid: &TimeGrid) -> DVector<f64> {
    let nt = grid.len();
    DVector::from_fn(spec.rates.len() * nt, |k, _| {
        let (i, j) = (k / nt, k % nt);
        signal_value(&spec.rates[i], grid.time(j) - grid.t0, spec.clip)
    })
}

/// True speed (m·s⁻¹) and direction the wind blows from (degrees) at `t` seconds
/// after the period start.
pub fn true_wind_at(w: &SyntheticWind, t: f64) -> (f64, f64) {
    let speed = w.mean_speed
        + w.daily_speed_swing * (2.0 * PI * t / DAY).sin()
        + 0.25 * w.mean_speed * (2.0 * PI * t / (3.3 * DAY) + 1.0).sin();
    let dir = w.mean_direction_from
        + w.daily_direction_swing * (2.0 * PI * t / DAY + 0.7).sin()
        + 0.5 * w.daily_direction_swing * (2.0 * PI * t / (4.7 * DAY)).sin();
    (speed.max(0.5), dir.rem_euclid(360.0))
}

pub fn true_wind(w: &SyntheticWind, grid: &TimeGrid) -> Result<WindSeries> {
    let (ux, uy) = grid
        .times()
        .map(|t| {
            let (speed, direction_from) = true_wind_at(w, t - grid.t0);
            to_components(&RawWindRecord {
                timestamp: t,
                speed,
                direction_from,
            })
        })
        .unzip();
    Ok(WindSeries::new(*grid, ux, uy)?)
}

/// Anemometer records every `record_interval_s` over `[t0, t0 + span]`,
/// perturbed by Gaussian speed and direction noise.
pub fn anemometer_records(w: &SyntheticWind, t0: f64, span: f64, seed: u64) -> Result<Vec<RawWindRecord>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = (span / w.record_interval_s).floor() as usize + 1;
    (0..n)
        .map(|k| {
            let t = k as f64 * w.record_interval_s;
            let (s, d) = true_wind_at(w, t);
            let ds: f64 = rng.sample(StandardNormal);
            let dd: f64 = rng.sample(StandardNormal);
            let speed = (s + w.speed_noise * ds).max(0.0);
            let dir = (d + w.direction_noise_deg * dd).rem_euclid(360.0);
            // rem_euclid can round up to exactly 360 for tiny negative inputs
            let dir = if dir >= 360.0 { 0.0 } else { dir };
            Ok(RawWindRecord::new(t0 + t, speed, dir)?)
        })
        .collect()
}

/// Generate the full synthetic data set for `cfg` and `sensors`.
pub fn generate(cfg: &RunConfig, sensors: &[SensorSpec]) -> Result<SyntheticData> {
    let spec = cfg
        .synthetic
        .as_ref()
        .ok_or_else(|| CliError::Validation("configuration has no [synthetic] section".into()))?;
    if cfg.time.dt_generation == cfg.time.dt_inversion && !cfg.time.allow_inverse_crime {
        return Err(CliError::Validation(format!(
            "generation and inversion grids share Δt = {} s; data would be generated with the inversion's own \
             discretisation (set time.allow_inverse_crime = true to permit this)",
            cfg.time.dt_inversion
        )));
    }
    let grid = cfg.generation_grid()?;
    let truth = true_rates(spec, &grid);
    let wind = true_wind(&spec.wind, &grid)?;
    let model = PlumeModel::new(cfg.sites()?, wind.clone(), cfg.particle()?, cfg.model.stability, cfg.kernel_options())?;
    let op = assemble_f(sensors, &model)?;
    let measurements = simulate_measurements(
        &op,
        sensors,
        &truth,
        streams::derive(cfg.seed, streams::MEASUREMENT_NOISE),
        cfg.model.noise_floor,
    )?;
    log::info!(
        "synthetic data: {} readings from {} sensors on a {}-step generation grid (Δt = {} s); Σ from clean-signal variance",
        measurements.len(),
        sensors.len(),
        grid.len(),
        grid.dt
    );
    let anemometer = anemometer_records(
        &spec.wind,
        grid.t0,
        grid.span(),
        streams::derive(cfg.seed, streams::ANEMOMETER_NOISE),
    )?;
    Ok(SyntheticData {
        generation_grid: grid,
        truth,
        true_wind: wind,
        anemometer,
        measurements,
    })
}

/// Average source-major rates from `fine` onto the intervals of `coarse`:
/// each coarse slot takes the mean of the fine steps starting inside it.
pub fn average_onto(q: &DVector<f64>, fine: &TimeGrid, coarse: &TimeGrid) -> Result<DVector<f64>> {
    let (nf, nc) = (fine.len(), coarse.len());
    if !q.len().is_multiple_of(nf) {
        return Err(CliError::Validation(format!("{} rates do not split into blocks of {nf}", q.len())));
    }
    let ns = q.len() / nf;
    let mut out = DVector::zeros(ns * nc);
    for i in 0..ns {
        for j in 0..nc {
            let (a, b) = (coarse.time(j), coarse.time(j) + coarse.dt);
            let inside: Vec<f64> = (0..nf)
                .filter(|&k| fine.time(k) >= a - 1e-6 && fine.time(k) < b - 1e-6)
                .map(|k| q[i * nf + k])
                .collect();
            if inside.is_empty() {
                return Err(CliError::Validation(format!("coarse slot {j} holds no fine time step")));
            }
            out[i * nc + j] = inside.iter().sum::<f64>() / inside.len() as f64;
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::RunConfig;
    use crate::io::parse_sensors;

    #[test]
    fn zero_amplitude_gives_offsets() {
        let mut cfg = RunConfig::bundled();
        let spec = cfg.synthetic.as_mut().unwrap();
        for r in &mut spec.rates {
            r.amplitude = 0.0;
        }
        let grid = TimeGrid::new(0.0, 1800.0, 10).unwrap();
        let q = true_rates(spec, &grid);
        for (i, r) in spec.rates.iter().enumerate() {
            assert!(q.rows(i * 10, 10).iter().all(|&v| v == r.offset.max(0.0)));
        }
    }

    #[test]
    fn clipping() {
        let s = SourceSignal {
            source: "a".into(),
            amplitude: 2.0,
            omega: 1.0,
            phase: -PI / 2.0,
            offset: 1.0,
        };
        assert_eq!(signal_value(&s, 0.0, true), 0.0);
        assert_eq!(signal_value(&s, 0.0, false), -1.0);
    }

    #[test]
    fn inverse_crime_guard() {
        let mut cfg = RunConfig::bundled();
        cfg.time.dt_generation = cfg.time.dt_inversion;
        let sensors = parse_sensors(crate::config::DEFAULT_SENSORS).unwrap();
        assert!(matches!(generate(&cfg, &sensors), Err(CliError::Validation(_))));
    }

    #[test]
    fn anemometer_is_seeded() {
        let w = RunConfig::bundled().synthetic.unwrap().wind;
        let a = anemometer_records(&w, 0.0, 7200.0, 3).unwrap();
        assert_eq!(a, anemometer_records(&w, 0.0, 7200.0, 3).unwrap());
        assert_ne!(a, anemometer_records(&w, 0.0, 7200.0, 4).unwrap());
        assert_eq!(a.len(), 13);
        assert!(a.iter().all(|r| r.direction_from >= 0.0 && r.direction_from < 360.0));
    }

    #[test]
    fn averaging_halves_the_grid() {
        let fine = TimeGrid::new(0.0, 1800.0, 4).unwrap();
        let coarse = TimeGrid::new(0.0, 3600.0, 2).unwrap();
        let q = DVector::from_vec(vec![1.0, 3.0, 5.0, 7.0, 0.0, 2.0, 2.0, 2.0]);
        let avg = average_onto(&q, &fine, &coarse).unwrap();
        assert_eq!(avg.as_slice(), &[2.0, 6.0, 1.0, 2.0]);
    }
}
