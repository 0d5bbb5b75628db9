//! Linear observation map from stacked emission rates to sensor readings.
//!
//! Every reading is a window-weighted time integral of the concentration at
//! the sensor, approximated with a left-endpoint rectangle rule on the
//! inversion grid: grid point `t_j` stands for the interval `[t_j, t_j + Δt)`.
//!
//! Stacking conventions (frozen, relied on by file formats and tests):
//! * emission vector `q` is source-major: index `i·N_T + j` is source `i` at time `t_j`;
//! * data vector `d` lists sensors in declaration order and, within a sensor,
//!   measurements in time order.

use std::ops::Range;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::plume::PlumeModel;

/// Tolerance (s) used when comparing grid times against window edges.
const TIME_EPS: f64 = 1e-6;

/// Uniform time grid `t_j = t0 + j·Δt`, `j = 0..N_T`, spanning `T = N_T·Δt`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    /// Epoch seconds of the first grid point.
    pub t0: f64,
    /// Step, s.
    pub dt: f64,
    /// Number of grid points, N_T.
    pub n: usize,
}

impl TimeGrid {
    pub fn new(t0: f64, dt: f64, n: usize) -> Result<Self> {
        if !t0.is_finite() {
            return Err(Error::invalid("t0", "must be finite"));
        }
        if !(dt > 0.0) || !dt.is_finite() {
            return Err(Error::invalid("dt", format!("must be > 0, got {dt}")));
        }
        if n < 2 {
            return Err(Error::invalid("n_times", format!("need at least 2 grid points, got {n}")));
        }
        Ok(Self { t0, dt, n })
    }

    /// Grid covering `[t0, t0 + span)` with step `dt`; `span` is rounded down to
    /// a whole number of steps.
    pub fn covering(t0: f64, span: f64, dt: f64) -> Result<Self> {
        let n = ((span + TIME_EPS) / dt).floor() as usize;
        Self::new(t0, dt, n)
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn span(&self) -> f64 {
        self.n as f64 * self.dt
    }

    pub fn end(&self) -> f64 {
        self.t0 + self.span()
    }

    pub fn time(&self, j: usize) -> f64 {
        self.t0 + j as f64 * self.dt
    }

    pub fn times(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.n).map(move |j| self.time(j))
    }
}

/// How a sensor turns concentration into a reading.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SensorKind {
    /// Passive collector; one accumulated deposited mass for the whole period.
    DustfallJar {
        /// Opening area, m².
        area: f64,
    },
    /// Averages concentration over `window` seconds starting at each start time.
    RealTimeSampler { start_times: Vec<f64>, window: f64 },
}

/// Physical units of a reading.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum MeasurementUnits {
    /// Deposited mass, kg.
    Kilograms,
    /// Time-averaged concentration, kg·m⁻³.
    KilogramsPerCubicMetre,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensorSpec {
    pub id: String,
    /// (x, y, z) in m.
    pub location: [f64; 3],
    pub kind: SensorKind,
    /// Variance of the signal over variance of the noise.
    pub snr: f64,
}

impl SensorSpec {
    pub fn validate(&self) -> Result<()> {
        if self.location.iter().any(|c| !c.is_finite()) || self.location[2] < 0.0 {
            return Err(Error::Config(format!("sensor `{}`: location must be finite with z ≥ 0", self.id)));
        }
        if !(self.snr > 0.0) {
            return Err(Error::Config(format!("sensor `{}`: snr must be > 0, got {}", self.id, self.snr)));
        }
        match &self.kind {
            SensorKind::DustfallJar { area } => {
                if !(*area > 0.0) || !area.is_finite() {
                    return Err(Error::Config(format!("jar `{}`: area must be > 0, got {area}", self.id)));
                }
            }
            SensorKind::RealTimeSampler { start_times, window } => {
                if !(*window > 0.0) || !window.is_finite() {
                    return Err(Error::Config(format!("sampler `{}`: window must be > 0, got {window}", self.id)));
                }
                if start_times.is_empty() {
                    return Err(Error::Config(format!("sampler `{}`: no start times", self.id)));
                }
                if start_times.iter().any(|t| !t.is_finite()) || start_times.windows(2).any(|w| !(w[1] > w[0])) {
                    return Err(Error::Config(format!(
                        "sampler `{}`: start times must be finite and strictly increasing",
                        self.id
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn n_measurements(&self) -> usize {
        match &self.kind {
            SensorKind::DustfallJar { .. } => 1,
            SensorKind::RealTimeSampler { start_times, .. } => start_times.len(),
        }
    }

    pub fn units(&self) -> MeasurementUnits {
        match self.kind {
            SensorKind::DustfallJar { .. } => MeasurementUnits::Kilograms,
            SensorKind::RealTimeSampler { .. } => MeasurementUnits::KilogramsPerCubicMetre,
        }
    }

    pub fn is_jar(&self) -> bool {
        matches!(self.kind, SensorKind::DustfallJar { .. })
    }
}

/// Value of the window function of measurement `index` (0-based) at time `t`.
///
/// Jars weigh the whole grid period by `A·W_dep`; samplers weigh their window
/// by `1/Δτ`. Windows are closed on the left and open on the right so that a
/// window starting on a grid point and lasting one step covers exactly that point.
pub fn window_weight(sensor: &SensorSpec, index: usize, t: f64, grid: &TimeGrid, w_dep: f64) -> Result<f64> {
    let count = sensor.n_measurements();
    if index >= count {
        return Err(Error::IndexOutOfRange {
            sensor: sensor.id.clone(),
            index,
            count,
        });
    }
    let inside = |start: f64, end: f64| t >= start - TIME_EPS && t < end - TIME_EPS;
    Ok(match &sensor.kind {
        SensorKind::DustfallJar { area } => {
            if inside(grid.t0, grid.end()) {
                area * w_dep
            } else {
                0.0
            }
        }
        SensorKind::RealTimeSampler { start_times, window } => {
            let start = start_times[index];
            if inside(start, start + window) {
                1.0 / window
            } else {
                0.0
            }
        }
    })
}

/// Quadrature matrix `M_k` (`m_k × N_T`) of one sensor.
pub fn assemble_m(sensor: &SensorSpec, grid: &TimeGrid, w_dep: f64) -> Result<DMatrix<f64>> {
    sensor.validate()?;
    let rows = sensor.n_measurements();
    let mut m = DMatrix::zeros(rows, grid.len());
    for l in 0..rows {
        for (j, t) in grid.times().enumerate() {
            m[(l, j)] = window_weight(sensor, l, t, grid, w_dep)? * grid.dt;
        }
        if m.row(l).iter().all(|&w| w == 0.0) {
            return Err(Error::Config(format!(
                "sensor `{}` measurement {} covers no grid point (window outside the grid or shorter than Δt and misaligned)",
                sensor.id,
                l + 1
            )));
        }
    }
    Ok(m)
}

/// Unit-emission kernels `G_k` of one sensor, stored compactly as an
/// `N_T × N_s` matrix whose row `j` is the diagonal block `g_{k,j}`.
pub fn assemble_g_sensor(sensor: &SensorSpec, model: &PlumeModel) -> DMatrix<f64> {
    let table = model.kernel_table(sensor.location);
    DMatrix::from_row_slice(model.n_times(), model.n_sources(), &table)
}

/// Kernel blocks for every sensor, in declaration order.
pub fn assemble_g(sensors: &[SensorSpec], model: &PlumeModel) -> Vec<DMatrix<f64>> {
    warn_calm(model);
    sensors.par_iter().map(|s| assemble_g_sensor(s, model)).collect()
}

fn warn_calm(model: &PlumeModel) {
    let calm = model.calm_steps();
    if !calm.is_empty() {
        log::warn!(
            "{} of {} time steps have calm wind (< {} m/s) and contribute nothing to the forward map",
            calm.len(),
            model.n_times(),
            model.options.calm_wind
        );
    }
}

/// Identifies one row of the stacked data vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RowLabel {
    /// Position of the sensor in the declaration list.
    pub sensor: usize,
    /// 0-based measurement index within the sensor.
    pub index: usize,
}

/// The assembled observation map `F = M·G` with its row bookkeeping.
#[derive(Debug, Clone)]
pub struct ObservationOperator {
    pub matrix: DMatrix<f64>,
    pub rows: Vec<RowLabel>,
    pub n_sources: usize,
    pub n_times: usize,
}

impl ObservationOperator {
    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn n_cols(&self) -> usize {
        self.n_sources * self.n_times
    }

    pub fn apply(&self, q: &DVector<f64>) -> DVector<f64> {
        &self.matrix * q
    }

    /// Row range of sensor `k` in the stacked vector.
    pub fn sensor_rows(&self, sensor: usize) -> Range<usize> {
        let start = self.rows.iter().position(|r| r.sensor == sensor).unwrap_or(self.rows.len());
        let len = self.rows[start..].iter().take_while(|r| r.sensor == sensor).count();
        start..start + len
    }

    /// Keep only the rows in `keep`, in that order.
    pub fn select_rows(&self, keep: &[RowLabel]) -> Result<ObservationOperator> {
        let mut idx = Vec::with_capacity(keep.len());
        for label in keep {
            let pos = self
                .rows
                .iter()
                .position(|r| r == label)
                .ok_or_else(|| Error::Dimension(format!("no operator row for {label:?}")))?;
            idx.push(pos);
        }
        Ok(ObservationOperator {
            matrix: self.matrix.select_rows(idx.iter()),
            rows: keep.to_vec(),
            n_sources: self.n_sources,
            n_times: self.n_times,
        })
    }

    /// Drop every row that belongs to the listed sensors.
    pub fn without_sensors(&self, drop: &[usize]) -> ObservationOperator {
        let keep: Vec<RowLabel> = self.rows.iter().copied().filter(|r| !drop.contains(&r.sensor)).collect();
        self.select_rows(&keep).expect("rows come from self")
    }
}

/// Assemble the full observation map for `sensors` under `model`.
pub fn assemble_f(sensors: &[SensorSpec], model: &PlumeModel) -> Result<ObservationOperator> {
    let grid = model.wind.grid;
    let (nt, ns) = (grid.len(), model.n_sources());
    let ms = sensors
        .iter()
        .map(|s| assemble_m(s, &grid, model.particle.w_dep))
        .collect::<Result<Vec<_>>>()?;
    let gs = assemble_g(sensors, model);

    let total: usize = ms.iter().map(|m| m.nrows()).sum();
    let mut matrix = DMatrix::zeros(total, ns * nt);
    let mut rows = Vec::with_capacity(total);
    let mut r0 = 0;
    for (k, (m, g)) in ms.iter().zip(&gs).enumerate() {
        debug_assert_eq!(m.ncols(), nt);
        debug_assert_eq!(g.shape(), (nt, ns));
        for l in 0..m.nrows() {
            for j in 0..nt {
                let w = m[(l, j)];
                if w == 0.0 {
                    continue;
                }
                for i in 0..ns {
                    matrix[(r0 + l, i * nt + j)] = w * g[(j, i)];
                }
            }
            rows.push(RowLabel { sensor: k, index: l });
        }
        r0 += m.nrows();
    }
    Ok(ObservationOperator {
        matrix,
        rows,
        n_sources: ns,
        n_times: nt,
    })
}

/// One reading as it appears in a measurement file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeasurementEntry {
    pub sensor_id: String,
    /// 0-based measurement index within the sensor.
    pub index: usize,
    pub value: f64,
    pub units: MeasurementUnits,
}

/// Stacked readings with their (diagonal) noise covariance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeasurementSet {
    pub entries: Vec<MeasurementEntry>,
    pub rows: Vec<RowLabel>,
    /// Per-entry noise variance; Σ = diag(noise_variance).
    pub noise_variance: Vec<f64>,
}

impl MeasurementSet {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn values(&self) -> DVector<f64> {
        DVector::from_iterator(self.entries.len(), self.entries.iter().map(|e| e.value))
    }

    pub fn noise_variance(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.noise_variance)
    }

    /// Same data with every noise standard deviation multiplied by `scale`
    /// (used to study a mis-specified Σ).
    pub fn with_noise_scale(&self, scale: f64) -> Result<MeasurementSet> {
        if !(scale > 0.0) || !scale.is_finite() {
            return Err(Error::invalid("noise_scale", format!("must be > 0, got {scale}")));
        }
        let mut out = self.clone();
        out.noise_variance.iter_mut().for_each(|v| *v *= scale * scale);
        Ok(out)
    }

    /// Keep only the entries of sensors not listed in `drop`.
    pub fn without_sensors(&self, drop: &[usize]) -> MeasurementSet {
        let keep: Vec<usize> = (0..self.len()).filter(|&r| !drop.contains(&self.rows[r].sensor)).collect();
        MeasurementSet {
            entries: keep.iter().map(|&r| self.entries[r].clone()).collect(),
            rows: keep.iter().map(|&r| self.rows[r]).collect(),
            noise_variance: keep.iter().map(|&r| self.noise_variance[r]).collect(),
        }
    }

    /// Build a set from raw readings: check them against the sensor list,
    /// sort into stacking order and derive Σ from the per-sensor variance of the
    /// readings themselves divided by each sensor's SNR.
    pub fn from_readings(sensors: &[SensorSpec], readings: Vec<(String, usize, f64)>, noise_floor: f64) -> Result<MeasurementSet> {
        let mut labelled = Vec::with_capacity(readings.len());
        for (id, index, value) in readings {
            let k = sensors
                .iter()
                .position(|s| s.id == id)
                .ok_or_else(|| Error::Config(format!("measurement references unknown sensor `{id}`")))?;
            let count = sensors[k].n_measurements();
            if sensors[k].is_jar() && index != 0 {
                return Err(Error::Config(format!(
                    "dust-fall jar `{id}` yields a single value per period; got measurement index {}",
                    index + 1
                )));
            }
            if index >= count {
                return Err(Error::IndexOutOfRange { sensor: id, index, count });
            }
            if !value.is_finite() {
                return Err(Error::Config(format!("sensor `{id}` measurement {}: non-finite value", index + 1)));
            }
            labelled.push((RowLabel { sensor: k, index }, value));
        }
        labelled.sort_by_key(|(r, _)| (r.sensor, r.index));
        if let Some(w) = labelled.windows(2).find(|w| w[0].0 == w[1].0) {
            let s = &sensors[w[0].0.sensor];
            return Err(Error::Config(if s.is_jar() {
                format!("dust-fall jar `{}` has more than one measurement", s.id)
            } else {
                format!("sensor `{}` measurement {} appears twice", s.id, w[0].0.index + 1)
            }));
        }
        let rows: Vec<RowLabel> = labelled.iter().map(|(r, _)| *r).collect();
        let values: Vec<f64> = labelled.iter().map(|(_, v)| *v).collect();
        let noise_variance = noise_std(sensors, &rows, &values, noise_floor)
            .into_iter()
            .map(|s| s * s)
            .collect();
        let entries = rows
            .iter()
            .zip(&values)
            .map(|(r, &value)| MeasurementEntry {
                sensor_id: sensors[r.sensor].id.clone(),
                index: r.index,
                value,
                units: sensors[r.sensor].units(),
            })
            .collect();
        Ok(MeasurementSet {
            entries,
            rows,
            noise_variance,
        })
    }
}

fn population_variance(values: &[f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n
}

/// Per-row noise standard deviation `√(var(signal)/snr)`, floored at `noise_floor`.
///
/// The signal variance is taken over all rows of the sensor. Sensors holding a
/// single reading (dust-fall jars) have no variance of their own, so they are
/// pooled with every other single-reading sensor of the same kind and SNR.
/// Infinite SNR gives a zero standard deviation before the floor is applied.
pub fn noise_std(sensors: &[SensorSpec], rows: &[RowLabel], signal: &[f64], noise_floor: f64) -> Vec<f64> {
    noise_std_unfloored(sensors, rows, signal)
        .into_iter()
        .map(|s| s.max(noise_floor))
        .collect()
}

fn noise_std_unfloored(sensors: &[SensorSpec], rows: &[RowLabel], signal: &[f64]) -> Vec<f64> {
    let mut per_sensor: Vec<Vec<f64>> = vec![Vec::new(); sensors.len()];
    for (r, v) in rows.iter().zip(signal) {
        per_sensor[r.sensor].push(*v);
    }
    let pooled_group = |k: usize| (sensors[k].is_jar(), sensors[k].snr.to_bits());
    let variance_of = |k: usize| -> f64 {
        if per_sensor[k].len() > 1 {
            population_variance(&per_sensor[k])
        } else {
            let group = pooled_group(k);
            let pool: Vec<f64> = (0..sensors.len())
                .filter(|&o| per_sensor[o].len() == 1 && pooled_group(o) == group)
                .map(|o| per_sensor[o][0])
                .collect();
            population_variance(&pool)
        }
    };
    let sensor_std: Vec<f64> = (0..sensors.len())
        .map(|k| {
            let snr = sensors[k].snr;
            if snr.is_infinite() || per_sensor[k].is_empty() {
                0.0
            } else {
                (variance_of(k) / snr).sqrt()
            }
        })
        .collect();
    rows.iter().map(|r| sensor_std[r.sensor]).collect()
}

/// Synthetic readings `d = F·q + ε` with Gaussian noise scaled per sensor by its SNR.
///
/// Deterministic for a fixed `seed`. With infinite SNR no noise is added.
pub fn simulate_measurements(
    op: &ObservationOperator,
    sensors: &[SensorSpec],
    q: &DVector<f64>,
    seed: u64,
    noise_floor: f64,
) -> Result<MeasurementSet> {
    if q.len() != op.n_cols() {
        return Err(Error::Dimension(format!("q has {} entries, F has {} columns", q.len(), op.n_cols())));
    }
    if q.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("q", "must be finite"));
    }
    let clean = op.apply(q);
    let raw_std = noise_std_unfloored(sensors, &op.rows, clean.as_slice());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut entries = Vec::with_capacity(op.n_rows());
    let mut noise_variance = Vec::with_capacity(op.n_rows());
    for (r, label) in op.rows.iter().enumerate() {
        let sensor = &sensors[label.sensor];
        let z: f64 = StandardNormal.sample(&mut rng);
        let std = raw_std[r].max(noise_floor);
        let value = if sensor.snr.is_infinite() {
            clean[r]
        } else {
            clean[r] + std * z
        };
        entries.push(MeasurementEntry {
            sensor_id: sensor.id.clone(),
            index: label.index,
            value,
            units: sensor.units(),
        });
        noise_variance.push(std * std);
    }
    Ok(MeasurementSet {
        entries,
        rows: op.rows.clone(),
        noise_variance,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid() -> TimeGrid {
        TimeGrid::new(1000.0, 600.0, 6).unwrap()
    }

    fn jar(area: f64) -> SensorSpec {
        SensorSpec {
            id: "jar".into(),
            location: [10.0, 0.0, 1.0],
            kind: SensorKind::DustfallJar { area },
            snr: 10.0,
        }
    }

    fn sampler(starts: Vec<f64>, window: f64) -> SensorSpec {
        SensorSpec {
            id: "rt".into(),
            location: [10.0, 0.0, 2.0],
            kind: SensorKind::RealTimeSampler {
                start_times: starts,
                window,
            },
            snr: 100.0,
        }
    }

    #[test]
    fn grid_validation() {
        assert!(TimeGrid::new(0.0, 0.0, 5).is_err());
        assert!(TimeGrid::new(0.0, 10.0, 1).is_err());
        let g = TimeGrid::covering(0.0, 86_400.0, 3600.0).unwrap();
        assert_eq!(g.len(), 24);
        assert_eq!(g.span(), 86_400.0);
    }

    #[test]
    fn window_weights() {
        let g = grid();
        let w = window_weight(&jar(0.01), 0, 1500.0, &g, 0.005).unwrap();
        assert!((w - 5e-5).abs() < 1e-20);
        assert_eq!(window_weight(&jar(0.01), 0, g.end() + 1.0, &g, 0.005).unwrap(), 0.0);
        assert!(matches!(
            window_weight(&jar(0.01), 1, 1500.0, &g, 0.005),
            Err(Error::IndexOutOfRange { .. })
        ));

        let s = sampler(vec![10_000.0], 3600.0);
        assert_eq!(window_weight(&s, 0, 5000.0, &g, 0.005).unwrap(), 0.0);
        assert_eq!(window_weight(&s, 0, 12_000.0, &g, 0.005).unwrap(), 1.0 / 3600.0);
    }

    #[test]
    fn jar_row_is_constant() {
        let g = grid();
        let m = assemble_m(&jar(0.02), &g, 0.005).unwrap();
        assert_eq!(m.shape(), (1, 6));
        for j in 0..6 {
            assert!((m[(0, j)] - 0.02 * 0.005 * 600.0).abs() < 1e-18);
        }
    }

    #[test]
    fn aligned_sampler_picks_single_column() {
        let g = grid();
        let s = sampler(vec![g.time(2), g.time(4)], g.dt);
        let m = assemble_m(&s, &g, 0.005).unwrap();
        assert_eq!(m.shape(), (2, 6));
        for j in 0..6 {
            assert_eq!(m[(0, j)], if j == 2 { 1.0 } else { 0.0 });
            assert_eq!(m[(1, j)], if j == 4 { 1.0 } else { 0.0 });
        }
    }

    #[test]
    fn sampler_row_sums() {
        let g = grid();
        let s = sampler(vec![g.time(1), g.time(3) + 1.0], 1500.0);
        let m = assemble_m(&s, &g, 0.005).unwrap();
        for l in 0..2 {
            let covered = m.row(l).iter().filter(|&&w| w > 0.0).count() as f64;
            assert!(m.row(l).iter().all(|&w| w >= 0.0));
            assert!((m.row(l).sum() - covered * g.dt / 1500.0).abs() < 1e-14);
        }
    }

    #[test]
    fn misplaced_sampler_is_rejected() {
        let g = grid();
        let outside = sampler(vec![g.end() + 100.0], 3600.0);
        assert!(matches!(assemble_m(&outside, &g, 0.005), Err(Error::Config(_))));
        // shorter than Δt and between grid points
        let narrow = sampler(vec![g.time(1) + 100.0], 200.0);
        assert!(matches!(assemble_m(&narrow, &g, 0.005), Err(Error::Config(_))));
    }

    #[test]
    fn sensor_validation() {
        assert!(jar(0.0).validate().is_err());
        assert!(sampler(vec![5.0, 5.0], 10.0).validate().is_err());
        assert!(sampler(vec![5.0, 6.0], 0.0).validate().is_err());
        let mut s = jar(1.0);
        s.snr = 0.0;
        assert!(s.validate().is_err());
    }

    #[test]
    fn jar_noise_is_pooled() {
        let sensors = vec![jar(1.0), jar(1.0), sampler(vec![0.0, 1.0, 2.0], 1.0)];
        let rows = vec![
            RowLabel { sensor: 0, index: 0 },
            RowLabel { sensor: 1, index: 0 },
            RowLabel { sensor: 2, index: 0 },
            RowLabel { sensor: 2, index: 1 },
            RowLabel { sensor: 2, index: 2 },
        ];
        let signal = [1.0, 3.0, 0.0, 3.0, 6.0];
        let std = noise_std(&sensors, &rows, &signal, 1e-12);
        // jars: var{1,3} = 1, snr 10
        assert!((std[0] - (1.0f64 / 10.0).sqrt()).abs() < 1e-15);
        assert_eq!(std[0], std[1]);
        // sampler: var{0,3,6} = 6, snr 100
        for s in &std[2..] {
            assert!((s - (6.0f64 / 100.0).sqrt()).abs() < 1e-15);
        }
        let flat = noise_std(&sensors[2..], &[RowLabel { sensor: 0, index: 0 }, RowLabel { sensor: 0, index: 1 }], &[2.0, 2.0], 1e-9);
        assert_eq!(flat, vec![1e-9, 1e-9]);
    }

    #[test]
    fn readings_are_validated_and_sorted() {
        let sensors = vec![jar(1.0), sampler(vec![0.0, 1.0], 1.0)];
        let set = MeasurementSet::from_readings(
            &sensors,
            vec![("rt".into(), 1, 2.0), ("jar".into(), 0, 5.0), ("rt".into(), 0, 1.0)],
            1e-12,
        )
        .unwrap();
        assert_eq!(set.values().as_slice(), &[5.0, 1.0, 2.0]);
        assert_eq!(set.entries[0].units, MeasurementUnits::Kilograms);
        assert!(MeasurementSet::from_readings(&sensors, vec![("nope".into(), 0, 1.0)], 1e-12).is_err());
        let dup = MeasurementSet::from_readings(&sensors, vec![("jar".into(), 0, 1.0), ("jar".into(), 0, 2.0)], 1e-12);
        assert!(matches!(dup, Err(Error::Config(msg)) if msg.contains("more than one")));
        assert!(MeasurementSet::from_readings(&sensors, vec![("jar".into(), 1, 1.0)], 1e-12).is_err());
        assert!(MeasurementSet::from_readings(&sensors, vec![("rt".into(), 2, 1.0)], 1e-12).is_err());
    }
}
