//! Wind regularisation.
//!
//! Raw station records (speed, direction the wind blows *from*) are split into
//! east (`u_x`) and north (`u_y`) components, and each component is smoothed
//! independently with a zero-mean Gaussian process using a squared-exponential
//! covariance. Hyperparameters come from k-fold cross-validation over a small
//! logarithmic grid. Only the posterior mean is kept.
//!
//! The squared-exponential kernel is below `1e-17·s²` beyond `8.9·ℓ`, so the
//! kernel matrix of time-sorted inputs is stored and factored as a variable-band
//! (skyline) matrix; dropped entries are below double precision.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::observation::TimeGrid;

/// Number of cross-validation folds.
pub const N_FOLDS: usize = 10;

/// Kernel support in units of the length scale: exp(−x²/2) < 1e-17 beyond it.
const SUPPORT: f64 = 8.9;

/// One station reading.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RawWindRecord {
    /// Epoch seconds.
    pub timestamp: f64,
    /// m·s⁻¹
    pub speed: f64,
    /// Degrees clockwise from north the wind blows from, in `[0, 360)`.
    pub direction_from: f64,
}

impl RawWindRecord {
    pub fn new(timestamp: f64, speed: f64, direction_from: f64) -> Result<Self> {
        let r = Self {
            timestamp,
            speed,
            direction_from,
        };
        r.validate()?;
        Ok(r)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.timestamp.is_finite() {
            return Err(Error::invalid("timestamp", "must be finite"));
        }
        if !(self.speed >= 0.0) || !self.speed.is_finite() {
            return Err(Error::invalid("speed", format!("must be ≥ 0, got {}", self.speed)));
        }
        if !(0.0..360.0).contains(&self.direction_from) {
            return Err(Error::invalid(
                "direction",
                format!("must lie in [0, 360), got {}", self.direction_from),
            ));
        }
        Ok(())
    }
}

/// East/north components of a record; a wind from the north blows towards −y.
pub fn to_components(r: &RawWindRecord) -> (f64, f64) {
    let theta = r.direction_from.to_radians();
    (-r.speed * theta.sin(), -r.speed * theta.cos())
}

/// Regularised horizontal wind on a time grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindSeries {
    pub grid: TimeGrid,
    pub u_x: Vec<f64>,
    pub u_y: Vec<f64>,
}

impl WindSeries {
    pub fn new(grid: TimeGrid, u_x: Vec<f64>, u_y: Vec<f64>) -> Result<Self> {
        if u_x.len() != grid.len() || u_y.len() != grid.len() {
            return Err(Error::Dimension(format!(
                "wind components have {} and {} samples for a grid of {}",
                u_x.len(),
                u_y.len(),
                grid.len()
            )));
        }
        if u_x.iter().chain(&u_y).any(|v| !v.is_finite()) {
            return Err(Error::invalid("wind", "components must be finite"));
        }
        Ok(Self { grid, u_x, u_y })
    }

    pub fn components(&self, j: usize) -> (f64, f64) {
        (self.u_x[j], self.u_y[j])
    }

    pub fn speed(&self, j: usize) -> f64 {
        self.u_x[j].hypot(self.u_y[j])
    }
}

/// Hyperparameters of the squared-exponential GP
/// `k(t, t′) = s²·exp(−(t − t′)²/(2ℓ²))` with noise variance `σ_n²`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GpConfig {
    /// s², (m·s⁻¹)²
    pub signal_variance: f64,
    /// ℓ, s
    pub length_scale: f64,
    /// σ_n², (m·s⁻¹)²
    pub noise_variance: f64,
}

impl GpConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("signal_variance", self.signal_variance),
            ("length_scale", self.length_scale),
            ("noise_variance", self.noise_variance),
        ] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::invalid(name, format!("must be finite and > 0, got {v}")));
            }
        }
        Ok(())
    }

    fn kernel(&self, dt: f64) -> f64 {
        let r = dt / self.length_scale;
        self.signal_variance * (-0.5 * r * r).exp()
    }

    fn support(&self) -> f64 {
        SUPPORT * self.length_scale
    }
}

/// Candidate grid for cross-validation; the Cartesian product is searched.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GpSearchSpace {
    pub signal_variance: Vec<f64>,
    pub length_scale: Vec<f64>,
    pub noise_variance: Vec<f64>,
}

impl GpSearchSpace {
    /// Default 3 × 5 × 3 grid scaled to the data: signal variance around the
    /// mean square of the values, noise a fraction of it, length scales from one
    /// to sixteen median sample spacings.
    pub fn default_for(times: &[f64], values: &[f64]) -> Self {
        let n = values.len().max(1) as f64;
        let power = (values.iter().map(|v| v * v).sum::<f64>() / n).max(1e-6);
        let mut sorted = times.to_vec();
        sorted.sort_by(f64::total_cmp);
        let mut gaps: Vec<f64> = sorted.windows(2).map(|w| w[1] - w[0]).filter(|g| *g > 0.0).collect();
        gaps.sort_by(f64::total_cmp);
        let spacing = gaps.get(gaps.len() / 2).copied().unwrap_or(1.0);
        Self {
            signal_variance: [0.5, 1.0, 2.0].iter().map(|f| f * power).collect(),
            length_scale: [1.0, 2.0, 4.0, 8.0, 16.0].iter().map(|f| f * spacing).collect(),
            noise_variance: [0.01, 0.1, 0.5].iter().map(|f| f * power).collect(),
        }
    }

    pub fn candidates(&self) -> Vec<GpConfig> {
        let mut out = Vec::new();
        for &s in &self.signal_variance {
            for &l in &self.length_scale {
                for &n in &self.noise_variance {
                    out.push(GpConfig {
                        signal_variance: s,
                        length_scale: l,
                        noise_variance: n,
                    });
                }
            }
        }
        out
    }
}

/// Lower-triangular Cholesky factor with a variable band: row `i` holds
/// columns `first[i]..=i`.
struct SkylineCholesky {
    first: Vec<usize>,
    rows: Vec<Vec<f64>>,
}

impl SkylineCholesky {
    /// Factor `K + σ_n²I` for sorted `times`. Returns `None` on a non-positive pivot.
    fn factor(times: &[f64], cfg: &GpConfig, jitter: f64) -> Option<Self> {
        let n = times.len();
        let reach = cfg.support();
        let mut first = Vec::with_capacity(n);
        let mut p = 0;
        for i in 0..n {
            while times[i] - times[p] > reach {
                p += 1;
            }
            first.push(p);
        }
        let mut rows: Vec<Vec<f64>> = Vec::with_capacity(n);
        for i in 0..n {
            let fi = first[i];
            let mut row = vec![0.0; i - fi + 1];
            for j in fi..i {
                let fj = first[j];
                let start = fi.max(fj);
                let rj = &rows[j];
                let mut s = cfg.kernel(times[i] - times[j]);
                for k in start..j {
                    s -= row[k - fi] * rj[k - fj];
                }
                row[j - fi] = s / rj[j - fj];
            }
            let mut d = cfg.signal_variance + cfg.noise_variance + jitter;
            for v in &row[..i - fi] {
                d -= v * v;
            }
            if !(d > 0.0) {
                return None;
            }
            row[i - fi] = d.sqrt();
            rows.push(row);
        }
        Some(Self { first, rows })
    }

    fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = b.len();
        let mut y = b.to_vec();
        for i in 0..n {
            let fi = self.first[i];
            let row = &self.rows[i];
            let mut s = y[i];
            for k in fi..i {
                s -= row[k - fi] * y[k];
            }
            y[i] = s / row[i - fi];
        }
        // back substitution with Lᵀ, scattering row i into earlier unknowns
        for i in (0..n).rev() {
            let fi = self.first[i];
            let row = &self.rows[i];
            y[i] /= row[i - fi];
            let yi = y[i];
            for k in fi..i {
                y[k] -= row[k - fi] * yi;
            }
        }
        y
    }
}

/// A fitted GP: weights `α = (K + σ_n²I)⁻¹ y` on time-sorted training inputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GpFit {
    pub config: GpConfig,
    times: Vec<f64>,
    weights: Vec<f64>,
}

impl GpFit {
    pub fn fit(times: &[f64], values: &[f64], cfg: &GpConfig) -> Result<Self> {
        cfg.validate()?;
        if times.len() != values.len() {
            return Err(Error::Dimension(format!("{} times for {} values", times.len(), values.len())));
        }
        if times.len() < 2 {
            return Err(Error::invalid("data", "need at least two points"));
        }
        if times.iter().chain(values).any(|v| !v.is_finite()) {
            return Err(Error::invalid("data", "times and values must be finite"));
        }
        let mut order: Vec<usize> = (0..times.len()).collect();
        order.sort_by(|&a, &b| times[a].total_cmp(&times[b]).then(values[a].total_cmp(&values[b])));
        let t: Vec<f64> = order.iter().map(|&i| times[i]).collect();
        let y: Vec<f64> = order.iter().map(|&i| values[i]).collect();

        let mut jitter = 0.0;
        let chol = loop {
            if let Some(c) = SkylineCholesky::factor(&t, cfg, jitter) {
                break c;
            }
            jitter = if jitter == 0.0 { 1e-10 * cfg.signal_variance } else { jitter * 10.0 };
            if jitter > 1e-2 * cfg.signal_variance {
                return Err(Error::Numerical("GP kernel matrix is not positive definite even with jitter".into()));
            }
            log::warn!("GP kernel matrix ill-conditioned; adding jitter {jitter:e}");
        };
        let weights = chol.solve(&y);
        Ok(Self {
            config: *cfg,
            times: t,
            weights,
        })
    }

    pub fn predict(&self, t: f64) -> f64 {
        let reach = self.config.support();
        let lo = self.times.partition_point(|&s| s < t - reach);
        let hi = self.times.partition_point(|&s| s <= t + reach);
        (lo..hi).map(|i| self.config.kernel(t - self.times[i]) * self.weights[i]).sum()
    }

    pub fn span(&self) -> (f64, f64) {
        (self.times[0], self.times[self.times.len() - 1])
    }
}

/// GP posterior mean at `query` given noisy observations `(times, values)`.
pub fn gp_posterior_mean(times: &[f64], values: &[f64], cfg: &GpConfig, query: &[f64]) -> Result<Vec<f64>> {
    let fit = GpFit::fit(times, values, cfg)?;
    Ok(query.iter().map(|&t| fit.predict(t)).collect())
}

/// Outcome of a cross-validation search.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossValidation {
    pub best: GpConfig,
    /// Mean held-out squared error for every candidate, in candidate order.
    pub scores: Vec<f64>,
    pub folds: usize,
}

/// Pick the candidate with the smallest mean held-out squared error.
///
/// With at least [`N_FOLDS`] points the data are shuffled with `seed` and cut
/// into that many contiguous folds; otherwise leave-one-out is used. Ties go
/// to the smaller length scale.
pub fn cross_validate(times: &[f64], values: &[f64], candidates: &[GpConfig], seed: u64) -> Result<CrossValidation> {
    if candidates.is_empty() {
        return Err(Error::invalid("candidates", "empty search space"));
    }
    if times.len() != values.len() {
        return Err(Error::Dimension(format!("{} times for {} values", times.len(), values.len())));
    }
    let n = times.len();
    if n < 3 {
        return Err(Error::invalid("data", format!("cross-validation needs at least 3 points, got {n}")));
    }
    let mut perm: Vec<usize> = (0..n).collect();
    let folds = if n >= N_FOLDS {
        perm.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        N_FOLDS
    } else {
        log::warn!("only {n} wind samples; using leave-one-out instead of {N_FOLDS}-fold cross-validation");
        n
    };
    let fold_sets: Vec<Vec<usize>> = (0..folds)
        .map(|f| {
            let mut idx = perm[f * n / folds..(f + 1) * n / folds].to_vec();
            idx.sort_unstable();
            idx
        })
        .collect();

    let mut scores = Vec::with_capacity(candidates.len());
    for cfg in candidates {
        cfg.validate()?;
        let mut sse = 0.0;
        for held in &fold_sets {
            let mut is_held = vec![false; n];
            held.iter().for_each(|&i| is_held[i] = true);
            let (tt, tv): (Vec<f64>, Vec<f64>) = (0..n).filter(|&i| !is_held[i]).map(|i| (times[i], values[i])).unzip();
            let fit = GpFit::fit(&tt, &tv, cfg)?;
            sse += held.iter().map(|&i| (fit.predict(times[i]) - values[i]).powi(2)).sum::<f64>();
        }
        scores.push(sse / n as f64);
    }

    let mut best = 0;
    for c in 1..candidates.len() {
        let (s, b) = (scores[c], scores[best]);
        let tie = (s - b).abs() <= 1e-12 * b.abs().max(f64::MIN_POSITIVE);
        if (s < b && !tie) || (tie && candidates[c].length_scale < candidates[best].length_scale) {
            best = c;
        }
    }
    Ok(CrossValidation {
        best: candidates[best],
        scores,
        folds,
    })
}

/// Both wind components fitted and ready to be evaluated on any grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FittedWind {
    pub u_x: GpFit,
    pub u_y: GpFit,
    pub cv_x: CrossValidation,
    pub cv_y: CrossValidation,
}

impl FittedWind {
    pub fn evaluate(&self, grid: &TimeGrid) -> Result<WindSeries> {
        let (lo, hi) = self.u_x.span();
        if grid.t0 < lo || grid.time(grid.len() - 1) > hi {
            log::warn!("wind grid extends beyond the span of the wind records; extrapolating the GP mean");
        }
        let ux = grid.times().map(|t| self.u_x.predict(t)).collect();
        let uy = grid.times().map(|t| self.u_y.predict(t)).collect();
        WindSeries::new(*grid, ux, uy)
    }
}

fn sorted_components(records: &[RawWindRecord]) -> Result<(Vec<f64>, Vec<f64>, Vec<f64>)> {
    for r in records {
        r.validate()?;
    }
    let mut recs = records.to_vec();
    recs.sort_by(|a, b| {
        a.timestamp
            .total_cmp(&b.timestamp)
            .then(a.speed.total_cmp(&b.speed))
            .then(a.direction_from.total_cmp(&b.direction_from))
    });
    let times = recs.iter().map(|r| r.timestamp).collect();
    let (ux, uy) = recs.iter().map(to_components).unzip();
    Ok((times, ux, uy))
}

/// Fit both components, each with its own cross-validated hyperparameters.
/// `space = None` uses [`GpSearchSpace::default_for`] per component.
pub fn fit_wind(records: &[RawWindRecord], space: Option<&GpSearchSpace>, seed: u64) -> Result<FittedWind> {
    if records.len() < 2 {
        return Err(Error::invalid("wind records", "need at least two records"));
    }
    let (times, ux, uy) = sorted_components(records)?;
    let fit_one = |values: &[f64]| -> Result<(GpFit, CrossValidation)> {
        let own;
        let space = match space {
            Some(s) => s,
            None => {
                own = GpSearchSpace::default_for(&times, values);
                &own
            }
        };
        let cv = cross_validate(&times, values, &space.candidates(), seed)?;
        Ok((GpFit::fit(&times, values, &cv.best)?, cv))
    };
    let (x, y) = rayon::join(|| fit_one(&ux), || fit_one(&uy));
    let ((u_x, cv_x), (u_y, cv_y)) = (x?, y?);
    Ok(FittedWind { u_x, u_y, cv_x, cv_y })
}

/// Regularised wind on `grid` from raw records.
pub fn regularize_wind(records: &[RawWindRecord], grid: &TimeGrid, space: Option<&GpSearchSpace>, seed: u64) -> Result<WindSeries> {
    fit_wind(records, space, seed)?.evaluate(grid)
}
