//! Preconditioned Crank–Nicolson Metropolis sampling for densities of the form
//! `exp(−φ(v))·N(m, C)(dv)`.
//!
//! Random numbers come from two ChaCha8 streams derived from one seed: stream 0
//! feeds the prior draws of every proposal, stream 1 the acceptance uniforms.
//! Exactly one uniform is drawn per step, so the proposal noise of step `k` does
//! not depend on the chain length or on earlier accept/reject outcomes.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const PROPOSAL_STREAM: u64 = 0;
const ACCEPT_STREAM: u64 = 1;

/// A centred Gaussian that can be sampled exactly.
pub trait PriorSampler {
    fn dim(&self) -> usize;

    /// Overwrite `out` with one draw from `N(0, C)`.
    fn draw(&self, rng: &mut ChaCha8Rng, out: &mut DVector<f64>);
}

/// `N(0, C)` through a dense Cholesky factor `C = R·Rᵀ`. Intended for small problems.
#[derive(Debug, Clone)]
pub struct CholeskySampler {
    factor: DMatrix<f64>,
}

impl CholeskySampler {
    pub fn new(covariance: &DMatrix<f64>) -> Result<Self> {
        if !covariance.is_square() {
            return Err(Error::Dimension("covariance must be square".into()));
        }
        let chol = covariance
            .clone()
            .cholesky()
            .ok_or_else(|| Error::Numerical("prior covariance is not positive definite".into()))?;
        Ok(Self { factor: chol.unpack() })
    }
}

impl PriorSampler for CholeskySampler {
    fn dim(&self) -> usize {
        self.factor.nrows()
    }

    fn draw(&self, rng: &mut ChaCha8Rng, out: &mut DVector<f64>) {
        let xi = standard_normal_vector(rng, self.dim());
        out.gemv(1.0, &self.factor, &xi, 0.0);
    }
}

pub(crate) fn standard_normal_vector(rng: &mut ChaCha8Rng, n: usize) -> DVector<f64> {
    DVector::from_fn(n, |_, _| rng.sample(rand_distr::StandardNormal))
}

/// Chain settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SamplerConfig {
    /// Step size `0 < β ≤ 1`; `β = 1` gives independent prior proposals.
    pub beta: f64,
    /// Total number of steps `K`, burn-in included.
    pub n_steps: usize,
    /// Leading fraction of the chain discarded before averaging.
    pub burn_in_fraction: f64,
    pub seed: u64,
    /// Post-burn-in states kept for covariance estimation and trace dumps;
    /// the chain is thinned evenly to stay within this budget.
    pub max_stored_samples: usize,
    /// A full running covariance is accumulated only up to this dimension.
    pub dense_covariance_limit: usize,
    /// Number of batches for batch-means standard errors.
    pub n_batches: usize,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self {
            beta: 0.6,
            n_steps: 100_000,
            burn_in_fraction: 0.2,
            seed: 0,
            max_stored_samples: 1000,
            dense_covariance_limit: 256,
            n_batches: 50,
        }
    }
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.beta > 0.0 && self.beta <= 1.0) {
            return Err(Error::invalid("beta", format!("must lie in (0, 1], got {}", self.beta)));
        }
        if self.n_steps == 0 {
            return Err(Error::invalid("n_steps", "must be ≥ 1"));
        }
        if !(0.0..1.0).contains(&self.burn_in_fraction) {
            return Err(Error::invalid(
                "burn_in_fraction",
                format!("must lie in [0, 1), got {}", self.burn_in_fraction),
            ));
        }
        if self.n_batches < 2 {
            return Err(Error::invalid("n_batches", "must be ≥ 2"));
        }
        Ok(())
    }

    pub fn burn_in(&self) -> usize {
        ((self.n_steps as f64) * self.burn_in_fraction).floor() as usize
    }
}

/// One stored post-burn-in state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoredSample {
    /// 0-based step index.
    pub iteration: usize,
    pub accepted: bool,
    pub state: DVector<f64>,
}

/// Chain averages and diagnostics, computed over post-burn-in steps.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ChainSummary {
    pub mean: DVector<f64>,
    /// Sample covariance, present when the dimension is within
    /// [`SamplerConfig::dense_covariance_limit`].
    pub covariance: Option<DMatrix<f64>>,
    /// Marginal sample variances.
    pub variance: DVector<f64>,
    /// Batch-means Monte-Carlo standard error of each mean coordinate.
    pub mcse: DVector<f64>,
    pub samples: Vec<StoredSample>,
    /// Accepted fraction over all `K` steps.
    pub acceptance_rate: f64,
    /// Effective sample size of the potential trace.
    pub ess: f64,
    pub nonfinite_rejections: usize,
    pub beta: f64,
    pub n_steps: usize,
    pub burn_in: usize,
}

impl ChainSummary {
    /// Write stored samples as CSV: `iteration,accepted,` then the listed coordinates.
    pub fn write_trace_csv<W: std::io::Write>(&self, out: W, coords: &[usize]) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["iteration".to_string(), "accepted".to_string()];
        header.extend(coords.iter().map(|c| format!("v{c}")));
        w.write_record(&header)?;
        for s in &self.samples {
            let mut rec = vec![s.iteration.to_string(), u8::from(s.accepted).to_string()];
            rec.extend(coords.iter().map(|&c| format!("{:e}", s.state[c])));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Run a pCN chain started at the prior mean.
///
/// Proposal `ṽ = m + √(1−β²)(v − m) + β·w` with `w ~ N(0, C)`, accepted with
/// probability `min{1, exp(φ(v) − φ(ṽ))}`. A non-finite `φ(ṽ)` is rejected.
/// `observer(k, v, accepted)` sees the chain state after every step.
pub fn pcn_chain<P, S, O>(
    mut potential: P,
    prior_mean: &DVector<f64>,
    prior: &S,
    cfg: &SamplerConfig,
    mut observer: O,
) -> Result<ChainSummary>
where
    P: FnMut(&DVector<f64>) -> f64,
    S: PriorSampler + ?Sized,
    O: FnMut(usize, &DVector<f64>, bool),
{
    cfg.validate()?;
    let n = prior.dim();
    if prior_mean.len() != n {
        return Err(Error::Dimension(format!("prior mean has {} entries, prior has dimension {n}", prior_mean.len())));
    }
    let mut v = prior_mean.clone();
    let mut phi_v = potential(&v);
    if !phi_v.is_finite() {
        return Err(Error::Numerical("potential is not finite at the prior mean".into()));
    }

    let mut prop_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    prop_rng.set_stream(PROPOSAL_STREAM);
    let mut acc_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    acc_rng.set_stream(ACCEPT_STREAM);

    let burn_in = cfg.burn_in();
    let kept = cfg.n_steps - burn_in;
    let thin = kept.div_ceil(cfg.max_stored_samples.max(1)).max(1);
    let n_batches = cfg.n_batches.min(kept.max(1));
    let dense = n <= cfg.dense_covariance_limit;

    let shrink = (1.0 - cfg.beta * cfg.beta).max(0.0).sqrt();
    let mut w = DVector::zeros(n);
    let mut proposal = DVector::zeros(n);

    let mut count = 0usize;
    let mut mean = DVector::zeros(n);
    let mut m2 = DVector::<f64>::zeros(n);
    let mut comoment = dense.then(|| DMatrix::zeros(n, n));
    let mut batch_sums = DMatrix::zeros(n, n_batches);
    let mut batch_counts = vec![0usize; n_batches];
    let mut phi_trace = Vec::with_capacity(kept);
    let mut samples = Vec::new();
    let mut accepted_total = 0usize;
    let mut nonfinite = 0usize;
    let mut delta = DVector::zeros(n);

    for k in 0..cfg.n_steps {
        prior.draw(&mut prop_rng, &mut w);
        proposal.copy_from(prior_mean);
        proposal.axpy(shrink, &v, 1.0);
        proposal.axpy(-shrink, prior_mean, 1.0);
        proposal.axpy(cfg.beta, &w, 1.0);
        let u: f64 = acc_rng.random();

        let phi_new = potential(&proposal);
        let accepted = if phi_new.is_finite() {
            u.ln() < phi_v - phi_new
        } else {
            nonfinite += 1;
            false
        };
        if accepted {
            std::mem::swap(&mut v, &mut proposal);
            phi_v = phi_new;
            accepted_total += 1;
        }

        if k >= burn_in {
            let idx = k - burn_in;
            count += 1;
            // Welford update of mean and (co)moments
            delta.copy_from(&v);
            delta -= &mean;
            mean.axpy(1.0 / count as f64, &delta, 1.0);
            for i in 0..n {
                m2[i] += delta[i] * (v[i] - mean[i]);
            }
            if let Some(c) = comoment.as_mut() {
                let after = &v - &mean;
                c.ger(1.0, &delta, &after, 1.0);
            }
            let b = (idx * n_batches / kept).min(n_batches - 1);
            batch_sums.column_mut(b).axpy(1.0, &v, 1.0);
            batch_counts[b] += 1;
            phi_trace.push(phi_v);
            if cfg.max_stored_samples > 0 && idx % thin == thin - 1 {
                samples.push(StoredSample {
                    iteration: k,
                    accepted,
                    state: v.clone(),
                });
            }
        }
        observer(k, &v, accepted);
    }

    if nonfinite > 0 {
        log::warn!("{nonfinite} proposals had a non-finite potential and were rejected");
    }
    let denom = (count.max(2) - 1) as f64;
    let variance = m2.map(|s| s / denom);
    let covariance = comoment.map(|c| {
        let c = c / denom;
        (&c + c.transpose()) * 0.5
    });
    let mcse = batch_means_error(&batch_sums, &batch_counts);
    Ok(ChainSummary {
        mean,
        covariance,
        variance,
        mcse,
        samples,
        acceptance_rate: accepted_total as f64 / cfg.n_steps as f64,
        ess: effective_sample_size(&phi_trace),
        nonfinite_rejections: nonfinite,
        beta: cfg.beta,
        n_steps: cfg.n_steps,
        burn_in,
    })
}

fn batch_means_error(sums: &DMatrix<f64>, counts: &[usize]) -> DVector<f64> {
    let used: Vec<usize> = (0..counts.len()).filter(|&b| counts[b] > 0).collect();
    let nb = used.len();
    if nb < 2 {
        return DVector::from_element(sums.nrows(), f64::NAN);
    }
    DVector::from_fn(sums.nrows(), |i, _| {
        let means: Vec<f64> = used.iter().map(|&b| sums[(i, b)] / counts[b] as f64).collect();
        let grand = means.iter().sum::<f64>() / nb as f64;
        let var = means.iter().map(|m| (m - grand).powi(2)).sum::<f64>() / (nb - 1) as f64;
        (var / nb as f64).sqrt()
    })
}

/// Effective sample size `n/τ` with `τ` from Geyer's initial positive sequence
/// of autocorrelations.
pub fn effective_sample_size(trace: &[f64]) -> f64 {
    let n = trace.len();
    if n < 4 {
        return n as f64;
    }
    let mean = trace.iter().sum::<f64>() / n as f64;
    let centred: Vec<f64> = trace.iter().map(|x| x - mean).collect();
    let c0 = centred.iter().map(|x| x * x).sum::<f64>() / n as f64;
    if !(c0 > 0.0) {
        return n as f64;
    }
    let rho = |lag: usize| -> f64 {
        centred[..n - lag].iter().zip(&centred[lag..]).map(|(a, b)| a * b).sum::<f64>() / (n as f64 * c0)
    };
    let mut tau = -1.0;
    let mut lag = 0;
    while lag + 1 < n {
        let pair = rho(lag) + rho(lag + 1);
        if pair <= 0.0 {
            break;
        }
        tau += 2.0 * pair;
        lag += 2;
    }
    n as f64 / tau.max(1.0)
}

/// Result of [`tune_beta`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BetaTuning {
    pub beta: f64,
    pub acceptance_rate: f64,
    pub in_band: bool,
    /// Every `(β, acceptance)` pilot that was run, in order.
    pub pilots: Vec<(f64, f64)>,
}

/// Bisection on `β ∈ (0, 1]` against the pilot acceptance rate.
///
/// `β = 1` is tried first; if even that accepts more than the band allows the
/// band is unreachable and `β = 1` is returned. Otherwise up to 12 bisection
/// steps look for a rate inside `band`, returning the closest pilot when none
/// lands in it.
pub fn tune_beta<P, S>(
    mut potential: P,
    prior_mean: &DVector<f64>,
    prior: &S,
    band: (f64, f64),
    pilot_steps: usize,
    seed: u64,
) -> Result<BetaTuning>
where
    P: FnMut(&DVector<f64>) -> f64,
    S: PriorSampler + ?Sized,
{
    let (lo_rate, hi_rate) = band;
    if !(0.0 <= lo_rate && lo_rate < hi_rate && hi_rate <= 1.0) {
        return Err(Error::invalid("band", format!("need 0 ≤ low < high ≤ 1, got {band:?}")));
    }
    if pilot_steps < 1000 {
        return Err(Error::invalid("pilot_steps", format!("must be ≥ 1000, got {pilot_steps}")));
    }
    let mut pilots = Vec::new();
    let mut run = |beta: f64, pilots: &mut Vec<(f64, f64)>| -> Result<f64> {
        let cfg = SamplerConfig {
            beta,
            n_steps: pilot_steps,
            burn_in_fraction: 0.0,
            seed,
            max_stored_samples: 0,
            dense_covariance_limit: 0,
            n_batches: 2,
        };
        let rate = pcn_chain(&mut potential, prior_mean, prior, &cfg, |_, _, _| {})?.acceptance_rate;
        pilots.push((beta, rate));
        Ok(rate)
    };
    let distance = |r: f64| {
        if r < lo_rate {
            lo_rate - r
        } else if r > hi_rate {
            r - hi_rate
        } else {
            0.0
        }
    };

    let rate = run(1.0, &mut pilots)?;
    if rate > hi_rate {
        log::warn!("acceptance band {band:?} unreachable: rate {rate:.3} already at β = 1");
        return Ok(BetaTuning {
            beta: 1.0,
            acceptance_rate: rate,
            in_band: false,
            pilots,
        });
    }
    if distance(rate) == 0.0 {
        return Ok(BetaTuning {
            beta: 1.0,
            acceptance_rate: rate,
            in_band: true,
            pilots,
        });
    }
    let (mut lo, mut hi) = (0.0, 1.0);
    let mut best = (1.0, rate);
    for _ in 0..12 {
        let beta = 0.5 * (lo + hi);
        let rate = run(beta, &mut pilots)?;
        if distance(rate) < distance(best.1) {
            best = (beta, rate);
        }
        if distance(rate) == 0.0 {
            return Ok(BetaTuning {
                beta,
                acceptance_rate: rate,
                in_band: true,
                pilots,
            });
        }
        if rate > hi_rate {
            lo = beta;
        } else {
            hi = beta;
        }
    }
    log::warn!(
        "no β reached acceptance band {band:?}; using β = {:.4} with rate {:.3}",
        best.0,
        best.1
    );
    Ok(BetaTuning {
        beta: best.0,
        acceptance_rate: best.1,
        in_band: false,
        pilots,
    })
}
