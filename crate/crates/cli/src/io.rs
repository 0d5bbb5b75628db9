//! Readers and writers for the pipeline's text formats.
//!
//! Every CSV written here starts with a `# config_hash: <hex>` comment line;
//! the readers skip `#` lines.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use nalgebra::DVector;
use plume_core::observation::TimeGrid;
use plume_core::uqprop::DepositionGrid;
use plume_core::{MeasurementSet, RawWindRecord, SensorKind, SensorSpec, WindSeries};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};
use crate::timefmt;

pub const WIND_HEADER: [&str; 3] = ["timestamp", "speed_mps", "direction_deg_from"];
pub const MEASUREMENT_HEADER: [&str; 3] = ["sensor_id", "index", "value"];
pub const NOISE_HEADER: [&str; 3] = ["sensor_id", "index", "noise_variance"];
pub const EMISSION_HEADER: [&str; 4] = ["source_id", "time", "mean_kg_s", "std_kg_s"];
pub const TRUTH_HEADER: [&str; 3] = ["source_id", "time", "rate_kg_s"];
pub const REGULAR_WIND_HEADER: [&str; 3] = ["time", "u_x_mps", "u_y_mps"];
pub const GRID_HEADER_MG: [&str; 4] = ["x_m", "y_m", "mean_mg_m2", "std_mg_m2"];
pub const GRID_HEADER_KG: [&str; 4] = ["x_m", "y_m", "mean_kg_m2", "std_kg_m2"];

const HASH_PREFIX: &str = "# config_hash: ";

fn open(path: &Path) -> Result<File> {
    File::open(path).map_err(|source| CliError::Path {
        path: path.to_path_buf(),
        source,
    })
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|source| CliError::Path {
            path: dir.to_path_buf(),
            source,
        })?;
    }
    let f = File::create(path).map_err(|source| CliError::Path {
        path: path.to_path_buf(),
        source,
    })?;
    Ok(BufWriter::new(f))
}

fn input_error(path: &Path, line: u64, reason: impl Into<String>) -> CliError {
    CliError::Input {
        path: path.to_path_buf(),
        line,
        reason: reason.into(),
    }
}

/// CSV reader over `path` that skips comment lines and checks the header.
fn reader(path: &Path, header: &[&str]) -> Result<csv::Reader<File>> {
    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(open(path)?);
    let got = rdr.headers().map_err(|e| input_error(path, 1, e.to_string()))?.clone();
    if got.is_empty() {
        return Err(input_error(path, 1, "file is empty"));
    }
    if got.iter().ne(header.iter().copied()) {
        return Err(input_error(
            path,
            got.position().map_or(1, |p| p.line()),
            format!("expected header `{}`, found `{}`", header.join(","), got.iter().collect::<Vec<_>>().join(",")),
        ));
    }
    Ok(rdr)
}

/// Rows of a CSV file with their 1-based line numbers.
fn rows(path: &Path, header: &[&str]) -> Result<Vec<(u64, csv::StringRecord)>> {
    let mut rdr = reader(path, header)?;
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            input_error(path, line, e.to_string())
        })?;
        let line = rec.position().map_or(0, |p| p.line());
        out.push((line, rec));
    }
    Ok(out)
}

fn field_f64(path: &Path, line: u64, rec: &csv::StringRecord, k: usize, name: &str) -> Result<f64> {
    rec[k]
        .parse::<f64>()
        .ok()
        .filter(|v| v.is_finite())
        .ok_or_else(|| input_error(path, line, format!("{name}: `{}` is not a finite number", &rec[k])))
}

fn csv_writer(path: &Path, hash: &str, header: &[&str]) -> Result<csv::Writer<BufWriter<File>>> {
    let mut out = create(path)?;
    writeln!(out, "{HASH_PREFIX}{hash}")?;
    let mut w = csv::Writer::from_writer(out);
    w.write_record(header)?;
    Ok(w)
}

/// Configuration hash recorded in the first line of a CSV written by this crate.
pub fn read_hash(path: &Path) -> Result<Option<String>> {
    let text = std::fs::read_to_string(path).map_err(|source| CliError::Path {
        path: path.to_path_buf(),
        source,
    })?;
    Ok(text
        .lines()
        .next()
        .and_then(|l| l.strip_prefix(HASH_PREFIX))
        .map(|h| h.trim().to_string()))
}

fn num(v: f64) -> String {
    format!("{v:e}")
}

/// Anemometer records, sorted by time; a repeated timestamp keeps the last row.
pub fn load_wind_csv(path: &Path) -> Result<Vec<RawWindRecord>> {
    let rows = rows(path, &WIND_HEADER)?;
    if rows.is_empty() {
        return Err(input_error(path, 2, "no wind records"));
    }
    let mut records = Vec::with_capacity(rows.len());
    for (line, rec) in &rows {
        let t = timefmt::parse(&rec[0]).map_err(|e| input_error(path, *line, e.to_string()))?;
        let speed = field_f64(path, *line, rec, 1, "speed_mps")?;
        let dir = field_f64(path, *line, rec, 2, "direction_deg_from")?;
        let r = RawWindRecord::new(t, speed, dir).map_err(|e| input_error(path, *line, e.to_string()))?;
        records.push((*line, r));
    }
    records.sort_by(|a, b| a.1.timestamp.total_cmp(&b.1.timestamp).then(a.0.cmp(&b.0)));
    let mut out: Vec<RawWindRecord> = Vec::with_capacity(records.len());
    for (line, r) in records {
        match out.last_mut() {
            Some(prev) if prev.timestamp == r.timestamp => {
                log::warn!(
                    "{}:{line}: duplicate timestamp {}; keeping the later row",
                    path.display(),
                    timefmt::format(r.timestamp)
                );
                *prev = r;
            }
            _ => out.push(r),
        }
    }
    Ok(out)
}

pub fn write_wind_csv(path: &Path, hash: &str, records: &[RawWindRecord]) -> Result<()> {
    let mut w = csv_writer(path, hash, &WIND_HEADER)?;
    for r in records {
        w.write_record([timefmt::format(r.timestamp), r.speed.to_string(), r.direction_from.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_regular_wind(path: &Path, hash: &str, wind: &WindSeries) -> Result<()> {
    let mut w = csv_writer(path, hash, &REGULAR_WIND_HEADER)?;
    for j in 0..wind.grid.len() {
        w.write_record([timefmt::format(wind.grid.time(j)), wind.u_x[j].to_string(), wind.u_y[j].to_string()])?;
    }
    w.flush()?;
    Ok(())
}

/// Wind on `grid` as written by [`write_regular_wind`]; the times must match.
pub fn load_regular_wind(path: &Path, grid: TimeGrid) -> Result<WindSeries> {
    let rows = rows(path, &REGULAR_WIND_HEADER)?;
    if rows.len() != grid.len() {
        return Err(input_error(path, 0, format!("{} rows for a grid of {}", rows.len(), grid.len())));
    }
    let (mut ux, mut uy) = (Vec::with_capacity(rows.len()), Vec::with_capacity(rows.len()));
    for (j, (line, rec)) in rows.iter().enumerate() {
        let t = timefmt::parse(&rec[0]).map_err(|e| input_error(path, *line, e.to_string()))?;
        if (t - grid.time(j)).abs() > 1e-3 {
            return Err(input_error(path, *line, format!("time {} is off the inversion grid", &rec[0])));
        }
        ux.push(field_f64(path, *line, rec, 1, "u_x_mps")?);
        uy.push(field_f64(path, *line, rec, 2, "u_y_mps")?);
    }
    Ok(WindSeries::new(grid, ux, uy)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
enum SensorKindName {
    DustfallJar,
    Sampler,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Schedule {
    start: String,
    every_s: f64,
    count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SensorRecord {
    id: String,
    kind: SensorKindName,
    x_m: f64,
    y_m: f64,
    #[serde(default)]
    z_m: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    area_m2: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    window_s: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    start_times: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    schedule: Option<Schedule>,
    /// Defaults to 10 for jars and 100 for samplers.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    snr: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SensorFile {
    sensor: Vec<SensorRecord>,
}

pub const DEFAULT_JAR_SNR: f64 = 10.0;
pub const DEFAULT_SAMPLER_SNR: f64 = 100.0;

impl SensorRecord {
    fn into_spec(self) -> Result<SensorSpec> {
        let id = self.id;
        let bad = |msg: &str| CliError::Validation(format!("sensor `{id}`: {msg}"));
        let kind = match self.kind {
            SensorKindName::DustfallJar => {
                if self.window_s.is_some() || self.start_times.is_some() || self.schedule.is_some() {
                    return Err(bad("dust-fall jars take `area_m2` only"));
                }
                SensorKind::DustfallJar {
                    area: self.area_m2.ok_or_else(|| bad("missing `area_m2`"))?,
                }
            }
            SensorKindName::Sampler => {
                if self.area_m2.is_some() {
                    return Err(bad("samplers do not take `area_m2`"));
                }
                let window = self.window_s.ok_or_else(|| bad("missing `window_s`"))?;
                let start_times = match (self.start_times, self.schedule) {
                    (Some(list), None) => list.iter().map(|s| timefmt::parse(s)).collect::<Result<Vec<_>>>()?,
                    (None, Some(s)) => {
                        if !(s.every_s > 0.0) || s.count == 0 {
                            return Err(bad("schedule needs every_s > 0 and count ≥ 1"));
                        }
                        let t0 = timefmt::parse(&s.start)?;
                        (0..s.count).map(|k| t0 + k as f64 * s.every_s).collect()
                    }
                    _ => return Err(bad("give exactly one of `start_times` or `schedule`")),
                };
                SensorKind::RealTimeSampler { start_times, window }
            }
        };
        let snr = self.snr.unwrap_or(match kind {
            SensorKind::DustfallJar { .. } => DEFAULT_JAR_SNR,
            SensorKind::RealTimeSampler { .. } => DEFAULT_SAMPLER_SNR,
        });
        let spec = SensorSpec {
            id,
            location: [self.x_m, self.y_m, self.z_m],
            kind,
            snr,
        };
        spec.validate()?;
        Ok(spec)
    }

    fn from_spec(s: &SensorSpec) -> Self {
        let (kind, area_m2, window_s, start_times) = match &s.kind {
            SensorKind::DustfallJar { area } => (SensorKindName::DustfallJar, Some(*area), None, None),
            SensorKind::RealTimeSampler { start_times, window } => (
                SensorKindName::Sampler,
                None,
                Some(*window),
                Some(start_times.iter().map(|&t| timefmt::format(t)).collect()),
            ),
        };
        Self {
            id: s.id.clone(),
            kind,
            x_m: s.location[0],
            y_m: s.location[1],
            z_m: s.location[2],
            area_m2,
            window_s,
            start_times,
            schedule: None,
            snr: Some(s.snr),
        }
    }
}

pub fn parse_sensors(text: &str) -> Result<Vec<SensorSpec>> {
    let file: SensorFile = toml::from_str(text)?;
    let sensors = file
        .sensor
        .into_iter()
        .map(SensorRecord::into_spec)
        .collect::<Result<Vec<_>>>()?;
    for (k, s) in sensors.iter().enumerate() {
        if sensors[..k].iter().any(|o| o.id == s.id) {
            return Err(CliError::Validation(format!("duplicate sensor id `{}`", s.id)));
        }
    }
    if sensors.is_empty() {
        return Err(CliError::Validation("sensor file lists no sensors".into()));
    }
    Ok(sensors)
}

pub fn load_sensors(path: &Path) -> Result<Vec<SensorSpec>> {
    let text = std::fs::read_to_string(path).map_err(|source| CliError::Path {
        path: path.to_path_buf(),
        source,
    })?;
    parse_sensors(&text).map_err(|e| match e {
        CliError::Toml(t) => CliError::Validation(format!("{}: {t}", path.display())),
        other => other,
    })
}

pub fn write_sensors(path: &Path, hash: &str, sensors: &[SensorSpec]) -> Result<()> {
    let file = SensorFile {
        sensor: sensors.iter().map(SensorRecord::from_spec).collect(),
    };
    let body = toml::to_string(&file).map_err(|e| CliError::Validation(e.to_string()))?;
    let mut out = create(path)?;
    writeln!(out, "{HASH_PREFIX}{hash}")?;
    out.write_all(body.as_bytes())?;
    out.flush()?;
    Ok(())
}

/// Readings as `(sensor id, 0-based index, value)`; the file index is 1-based.
pub fn load_readings(path: &Path) -> Result<Vec<(String, usize, f64)>> {
    let rows = rows(path, &MEASUREMENT_HEADER)?;
    if rows.is_empty() {
        return Err(input_error(path, 2, "no measurements"));
    }
    rows.iter()
        .map(|(line, rec)| {
            let index: usize = rec[1]
                .parse()
                .ok()
                .filter(|&i| i >= 1)
                .ok_or_else(|| input_error(path, *line, format!("index `{}` must be an integer ≥ 1", &rec[1])))?;
            Ok((rec[0].to_string(), index - 1, field_f64(path, *line, rec, 2, "value")?))
        })
        .collect()
}

/// Measurements with Σ estimated from the per-sensor variance of the readings.
pub fn load_measurements(path: &Path, sensors: &[SensorSpec], noise_floor: f64) -> Result<MeasurementSet> {
    Ok(MeasurementSet::from_readings(sensors, load_readings(path)?, noise_floor)?)
}

pub fn write_measurements(path: &Path, hash: &str, set: &MeasurementSet) -> Result<()> {
    let mut w = csv_writer(path, hash, &MEASUREMENT_HEADER)?;
    for e in &set.entries {
        w.write_record([e.sensor_id.clone(), (e.index + 1).to_string(), num(e.value)])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_noise(path: &Path, hash: &str, set: &MeasurementSet) -> Result<()> {
    let mut w = csv_writer(path, hash, &NOISE_HEADER)?;
    for (e, v) in set.entries.iter().zip(&set.noise_variance) {
        w.write_record([e.sensor_id.clone(), (e.index + 1).to_string(), num(*v)])?;
    }
    w.flush()?;
    Ok(())
}

/// Replace the noise variances of `set` by those listed in `path`; every
/// measurement must be covered.
pub fn apply_noise_file(path: &Path, set: &mut MeasurementSet) -> Result<()> {
    let mut table = BTreeMap::new();
    for (line, rec) in rows(path, &NOISE_HEADER)? {
        let index: usize = rec[1]
            .parse()
            .ok()
            .filter(|&i| i >= 1)
            .ok_or_else(|| input_error(path, line, format!("index `{}` must be an integer ≥ 1", &rec[1])))?;
        let v = field_f64(path, line, &rec, 2, "noise_variance")?;
        if !(v > 0.0) {
            return Err(input_error(path, line, "noise variance must be > 0"));
        }
        table.insert((rec[0].to_string(), index - 1), v);
    }
    for (e, v) in set.entries.iter().zip(set.noise_variance.iter_mut()) {
        *v = *table.get(&(e.sensor_id.clone(), e.index)).ok_or_else(|| {
            CliError::Validation(format!(
                "{}: no noise variance for sensor `{}` measurement {}",
                path.display(),
                e.sensor_id,
                e.index + 1
            ))
        })?;
    }
    Ok(())
}

/// Per-source, per-time rates (source-major) with an optional std column.
pub fn write_emissions(
    path: &Path,
    hash: &str,
    source_ids: &[String],
    grid: &TimeGrid,
    mean: &DVector<f64>,
    std: &DVector<f64>,
) -> Result<()> {
    let mut w = csv_writer(path, hash, &EMISSION_HEADER)?;
    let nt = grid.len();
    for (i, id) in source_ids.iter().enumerate() {
        for j in 0..nt {
            let k = i * nt + j;
            w.write_record([id.clone(), timefmt::format(grid.time(j)), num(mean[k]), num(std[k])])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Stored emission estimate.
#[derive(Debug, Clone, PartialEq)]
pub struct EmissionFile {
    pub hash: Option<String>,
    pub mean: DVector<f64>,
    pub std: DVector<f64>,
}

/// Read an emissions file laid out for `source_ids` × `grid`.
pub fn load_emissions(path: &Path, source_ids: &[String], grid: &TimeGrid) -> Result<EmissionFile> {
    let rows = rows(path, &EMISSION_HEADER)?;
    let nt = grid.len();
    if rows.len() != source_ids.len() * nt {
        return Err(input_error(
            path,
            0,
            format!("{} rows, expected {} sources × {nt} times", rows.len(), source_ids.len()),
        ));
    }
    let mut mean = DVector::zeros(rows.len());
    let mut std = DVector::zeros(rows.len());
    for (k, (line, rec)) in rows.iter().enumerate() {
        let (i, j) = (k / nt, k % nt);
        if rec[0] != source_ids[i] {
            return Err(input_error(path, *line, format!("expected source `{}`, found `{}`", source_ids[i], &rec[0])));
        }
        let t = timefmt::parse(&rec[1]).map_err(|e| input_error(path, *line, e.to_string()))?;
        if (t - grid.time(j)).abs() > 1e-3 {
            return Err(input_error(path, *line, format!("time {} is off the inversion grid", &rec[1])));
        }
        mean[k] = field_f64(path, *line, rec, 2, "mean_kg_s")?;
        std[k] = field_f64(path, *line, rec, 3, "std_kg_s")?;
    }
    Ok(EmissionFile {
        hash: read_hash(path)?,
        mean,
        std,
    })
}

pub fn write_truth(path: &Path, hash: &str, source_ids: &[String], grid: &TimeGrid, q: &DVector<f64>) -> Result<()> {
    let mut w = csv_writer(path, hash, &TRUTH_HEADER)?;
    let nt = grid.len();
    for (i, id) in source_ids.iter().enumerate() {
        for j in 0..nt {
            w.write_record([id.clone(), timefmt::format(grid.time(j)), num(q[i * nt + j])])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// True rates as `(source id, time, rate)` rows.
pub fn load_truth(path: &Path) -> Result<Vec<(String, f64, f64)>> {
    rows(path, &TRUTH_HEADER)?
        .iter()
        .map(|(line, rec)| {
            let t = timefmt::parse(&rec[1]).map_err(|e| input_error(path, *line, e.to_string()))?;
            Ok((rec[0].to_string(), t, field_f64(path, *line, rec, 2, "rate_kg_s")?))
        })
        .collect()
}

/// Grid CSV (rows ordered by y, then x) in mg·m⁻² or kg·m⁻².
pub fn write_grid(path: &Path, hash: &str, dep: &DepositionGrid, milligrams: bool) -> Result<()> {
    let (header, scale) = if milligrams {
        (GRID_HEADER_MG, 1e6)
    } else {
        (GRID_HEADER_KG, 1.0)
    };
    let mut w = csv_writer(path, hash, &header)?;
    for c in 0..dep.grid.len() {
        let p = dep.grid.point(c);
        w.write_record([p[0].to_string(), p[1].to_string(), num(dep.mean[c] * scale), num(dep.std[c] * scale)])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut out = create(path)?;
    serde_json::to_writer_pretty(&mut out, value)?;
    writeln!(out)?;
    out.flush()?;
    Ok(())
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    Ok(serde_json::from_reader(std::io::BufReader::new(open(path)?))?)
}

/// `path` resolved against `base` unless already absolute.
pub fn resolve(base: &Path, path: &Path) -> PathBuf {
    if path.is_absolute() {
        path.to_path_buf()
    } else {
        base.join(path)
    }
}
