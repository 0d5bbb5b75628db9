use nalgebra::{DMatrix, DVector};
use plume_core::sampling::{pcn_chain, CholeskySampler, SamplerConfig};

/// Batch-means standard error of the mean of `f` along the chain.
struct BatchStats {
    sums: Vec<Vec<f64>>,
    counts: Vec<usize>,
    batch: usize,
}

impl BatchStats {
    fn new(n_stats: usize, n_batches: usize, kept: usize) -> Self {
        Self {
            sums: vec![vec![0.0; n_batches]; n_stats],
            counts: vec![0; n_batches],
            batch: kept / n_batches,
        }
    }

    fn push(&mut self, idx: usize, values: &[f64]) {
        let b = (idx / self.batch).min(self.counts.len() - 1);
        self.counts[b] += 1;
        for (s, v) in self.sums.iter_mut().zip(values) {
            s[b] += v;
        }
    }

    fn mean_and_error(&self, stat: usize) -> (f64, f64) {
        let nb = self.counts.len() as f64;
        let means: Vec<f64> = self.sums[stat].iter().zip(&self.counts).map(|(s, &c)| s / c as f64).collect();
        let total = self.sums[stat].iter().sum::<f64>() / self.counts.iter().sum::<usize>() as f64;
        let var = means.iter().map(|m| (m - total).powi(2)).sum::<f64>() / (nb - 1.0);
        (total, (var / nb).sqrt())
    }
}

#[test]
fn flat_potential_reproduces_the_prior() {
    let cov = DMatrix::from_row_slice(3, 3, &[2.0, 0.5, 0.0, 0.5, 1.0, 0.3, 0.0, 0.3, 0.5]);
    let mean = DVector::from_vec(vec![1.0, -2.0, 0.5]);
    let prior = CholeskySampler::new(&cov).unwrap();
    let cfg = SamplerConfig {
        beta: 0.6,
        n_steps: 100_000,
        seed: 11,
        ..Default::default()
    };
    let kept = cfg.n_steps - cfg.burn_in();
    let mut stats = BatchStats::new(6, 50, kept);
    let burn = cfg.burn_in();
    let summary = pcn_chain(|_| 0.0, &mean, &prior, &cfg, |k, v, _| {
        if k >= burn {
            let dv: Vec<f64> = (0..3).map(|i| v[i] - mean[i]).collect();
            stats.push(k - burn, &[v[0], v[1], v[2], dv[0] * dv[0], dv[1] * dv[1], dv[2] * dv[2]]);
        }
    })
    .unwrap();
    assert_eq!(summary.acceptance_rate, 1.0);
    for i in 0..3 {
        let (m, se) = stats.mean_and_error(i);
        assert!((m - mean[i]).abs() < 3.0 * se, "mean {i}: {m} vs {} (se {se})", mean[i]);
        assert!((summary.mean[i] - m).abs() < 1e-9);
        let (v, se) = stats.mean_and_error(3 + i);
        assert!((v - cov[(i, i)]).abs() < 3.0 * se, "var {i}: {v} vs {} (se {se})", cov[(i, i)]);
    }
}

#[test]
fn conjugate_target_matches_closed_form() {
    let c = DMatrix::from_row_slice(2, 2, &[1.0, 0.3, 0.3, 0.8]);
    let m0 = DVector::from_vec(vec![0.5, -0.5]);
    let a = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, -0.2, 1.0]);
    let r_inv = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0 / 0.4, 1.0 / 0.9]));
    let y = DVector::from_vec(vec![1.2, 0.7]);

    let precision = c.clone().try_inverse().unwrap() + a.transpose() * &r_inv * &a;
    let post_cov = precision.try_inverse().unwrap();
    let post_mean = &post_cov * (c.clone().try_inverse().unwrap() * &m0 + a.transpose() * &r_inv * &y);

    let prior = CholeskySampler::new(&c).unwrap();
    let cfg = SamplerConfig {
        beta: 0.5,
        n_steps: 200_000,
        seed: 5,
        ..Default::default()
    };
    let phi = |v: &DVector<f64>| {
        let r = &a * v - &y;
        0.5 * (r.transpose() * &r_inv * &r)[(0, 0)]
    };
    let kept = cfg.n_steps - cfg.burn_in();
    let burn = cfg.burn_in();
    let mut stats = BatchStats::new(5, 50, kept);
    pcn_chain(phi, &m0, &prior, &cfg, |k, v, _| {
        if k >= burn {
            let (d0, d1) = (v[0] - post_mean[0], v[1] - post_mean[1]);
            stats.push(k - burn, &[v[0], v[1], d0 * d0, d1 * d1, d0 * d1]);
        }
    })
    .unwrap();
    let targets = [post_mean[0], post_mean[1], post_cov[(0, 0)], post_cov[(1, 1)], post_cov[(0, 1)]];
    for (s, &t) in targets.iter().enumerate() {
        let (est, se) = stats.mean_and_error(s);
        assert!((est - t).abs() < 3.0 * se, "statistic {s}: {est} vs {t} (se {se})");
    }
}

#[test]
fn acceptance_decreases_with_beta() {
    let n = 10;
    let prior = CholeskySampler::new(&DMatrix::identity(n, n)).unwrap();
    let phi = |v: &DVector<f64>| 0.5 * v.iter().map(|x| (x - 0.3).powi(2) / 0.05).sum::<f64>();
    let betas = [0.05, 0.2, 0.5, 0.9];
    let mut rates = vec![0.0; betas.len()];
    for seed in 0..8 {
        for (b, &beta) in betas.iter().enumerate() {
            let cfg = SamplerConfig {
                beta,
                n_steps: 4000,
                seed,
                ..Default::default()
            };
            rates[b] += pcn_chain(phi, &DVector::zeros(n), &prior, &cfg, |_, _, _| {}).unwrap().acceptance_rate / 8.0;
        }
    }
    assert!(rates.windows(2).all(|w| w[1] <= w[0]), "{rates:?}");
}
