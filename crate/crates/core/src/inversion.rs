//! Three-stage emission estimation.
//!
//! 1. constant rates per source by non-negative least squares;
//! 2. a smooth Gaussian posterior in closed form, centred on the constant estimate;
//! 3. a smooth and non-negative posterior, sampled with pCN through the clipping
//!    map `h(v) = max(0, v)` and centred on `h` of the stage-2 mean.
//!
//! All emission vectors are source-major (see [`crate::observation`]).

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use nalgebra_sparse::CsrMatrix;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::observation::TimeGrid;
use crate::sampling::{pcn_chain, standard_normal_vector, PriorSampler, SamplerConfig};

/// Relative KKT tolerance of the NNLS solver.
pub const NNLS_TOLERANCE: f64 = 1e-10;

/// Acceptance rates outside this range trigger a retuning warning.
pub const ACCEPTANCE_WARN_BAND: (f64, f64) = (0.1, 0.6);

fn check_noise(noise_variance: &DVector<f64>, m: usize) -> Result<()> {
    if noise_variance.len() != m {
        return Err(Error::Dimension(format!("{} noise variances for {m} data", noise_variance.len())));
    }
    if noise_variance.iter().any(|v| !(*v > 0.0) || !v.is_finite()) {
        return Err(Error::invalid("noise variance", "every entry must be finite and > 0"));
    }
    Ok(())
}

/// Solution of `min ‖A·x − b‖₂` subject to `x ≥ 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NnlsSolution {
    pub x: DVector<f64>,
    /// `max` violation of the KKT conditions relative to `‖Aᵀb‖∞`.
    pub kkt_residual: f64,
    /// The minimiser may not be unique: the active columns are rank deficient or
    /// a zero coordinate has a vanishing gradient.
    pub non_unique: bool,
    pub iterations: usize,
}

fn least_squares(a: &DMatrix<f64>, b: &DVector<f64>) -> (DVector<f64>, bool) {
    let svd = a.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let eps = smax * f64::EPSILON * a.nrows().max(a.ncols()) as f64;
    let deficient = svd.singular_values.iter().any(|&s| s <= eps);
    let x = svd.solve(b, eps).expect("u and v were computed");
    (x, deficient)
}

/// Lawson–Hanson active-set NNLS.
pub fn nnls(a: &DMatrix<f64>, b: &DVector<f64>) -> Result<NnlsSolution> {
    let (m, n) = a.shape();
    if b.len() != m {
        return Err(Error::Dimension(format!("A is {m}×{n} but b has {} entries", b.len())));
    }
    if a.iter().chain(b.iter()).any(|v| !v.is_finite()) {
        return Err(Error::invalid("least-squares data", "must be finite"));
    }
    let scale = (a.transpose() * b).amax().max(a.amax() * b.amax()).max(f64::MIN_POSITIVE);
    let tol = NNLS_TOLERANCE * scale;
    let mut x = DVector::zeros(n);
    let mut passive = vec![false; n];
    let mut deficient = false;
    let gradient = |x: &DVector<f64>| a.transpose() * (b - a * x);
    let mut w = gradient(&x);
    let mut iterations = 0;
    let max_iter = 3 * n.max(1) + 10;

    while iterations < max_iter {
        let candidate = (0..n).filter(|&j| !passive[j] && w[j] > tol).max_by(|&i, &j| w[i].total_cmp(&w[j]));
        let Some(t) = candidate else { break };
        passive[t] = true;
        iterations += 1;
        loop {
            let cols: Vec<usize> = (0..n).filter(|&j| passive[j]).collect();
            let (z_p, def) = least_squares(&a.select_columns(cols.iter()), b);
            deficient = def;
            let mut z = DVector::zeros(n);
            cols.iter().zip(z_p.iter()).for_each(|(&j, &v)| z[j] = v);
            if cols.iter().all(|&j| z[j] > 0.0) {
                x = z;
                break;
            }
            let alpha = cols
                .iter()
                .filter(|&&j| z[j] <= 0.0)
                .map(|&j| x[j] / (x[j] - z[j]))
                .fold(f64::INFINITY, f64::min);
            x += (z - &x) * alpha;
            for &j in &cols {
                if x[j] <= f64::EPSILON * x.amax().max(f64::MIN_POSITIVE) {
                    x[j] = 0.0;
                    passive[j] = false;
                }
            }
        }
        w = gradient(&x);
    }
    if iterations >= max_iter {
        log::warn!("NNLS stopped after {max_iter} outer iterations");
    }

    let kkt = (0..n)
        .map(|j| if x[j] > 0.0 { w[j].abs() } else { w[j].max(0.0) })
        .fold(0.0, f64::max)
        / scale;
    let col_norm = |j: usize| a.column(j).norm();
    let degenerate = (0..n).any(|j| x[j] == 0.0 && w[j].abs() <= tol && col_norm(j) > 0.0);
    let non_unique = deficient || degenerate;
    Ok(NnlsSolution {
        x,
        kkt_residual: kkt,
        non_unique,
        iterations,
    })
}

/// Constant-in-time estimate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstantEstimate {
    /// One rate per source, kg·s⁻¹.
    pub rates: DVector<f64>,
    /// The rates replicated over every time slot (source-major).
    pub q: DVector<f64>,
    /// Standard error per source from the weighted least-squares fit restricted
    /// to the sources left free by the positivity constraint; 0 for clamped ones.
    pub std: DVector<f64>,
    pub kkt_residual: f64,
    pub non_unique: bool,
}

/// Columns of `F·A` where `A` replicates each source rate over all time slots.
pub fn constant_design(f: &DMatrix<f64>, n_sources: usize, n_times: usize) -> Result<DMatrix<f64>> {
    if f.ncols() != n_sources * n_times {
        return Err(Error::Dimension(format!(
            "F has {} columns, expected {n_sources}×{n_times}",
            f.ncols()
        )));
    }
    Ok(DMatrix::from_fn(f.nrows(), n_sources, |r, i| {
        f.row(r).columns(i * n_times, n_times).sum()
    }))
}

/// Non-negative weighted least-squares fit of one constant rate per source.
pub fn mle_constant(
    f: &DMatrix<f64>,
    n_sources: usize,
    n_times: usize,
    d: &DVector<f64>,
    noise_variance: &DVector<f64>,
) -> Result<ConstantEstimate> {
    check_noise(noise_variance, f.nrows())?;
    if d.len() != f.nrows() {
        return Err(Error::Dimension(format!("F has {} rows, d has {}", f.nrows(), d.len())));
    }
    let mut design = constant_design(f, n_sources, n_times)?;
    let mut rhs = d.clone();
    for r in 0..f.nrows() {
        let s = noise_variance[r].sqrt();
        design.row_mut(r).scale_mut(1.0 / s);
        rhs[r] /= s;
    }
    let sol = nnls(&design, &rhs)?;
    if sol.non_unique {
        log::warn!("constant-rate estimate is not unique (rank-deficient or degenerate design)");
    }
    let q = expand_constant(&sol.x, n_times);
    let std = free_set_std(&design, &sol.x);
    Ok(ConstantEstimate {
        rates: sol.x,
        q,
        std,
        kkt_residual: sol.kkt_residual,
        non_unique: sol.non_unique,
    })
}

fn free_set_std(design: &DMatrix<f64>, x: &DVector<f64>) -> DVector<f64> {
    let free: Vec<usize> = (0..x.len()).filter(|&i| x[i] > 0.0).collect();
    let mut std = DVector::zeros(x.len());
    if free.is_empty() {
        return std;
    }
    let a = design.select_columns(&free);
    let info = a.transpose() * &a;
    let eps = 1e-14 * info.amax();
    if let Ok(cov) = info.pseudo_inverse(eps) {
        for (k, &i) in free.iter().enumerate() {
            std[i] = cov[(k, k)].max(0.0).sqrt();
        }
    }
    std
}

/// Replicate per-source rates over `n_times` slots.
pub fn expand_constant(rates: &DVector<f64>, n_times: usize) -> DVector<f64> {
    DVector::from_fn(rates.len() * n_times, |k, _| rates[k / n_times])
}

/// Smoothness prior `α(I − γ∂ₜₜ)` on normalised time, one independent block per source.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PriorSpec {
    pub alpha: f64,
    pub gamma: f64,
    pub grid: TimeGrid,
    pub n_sources: usize,
}

impl PriorSpec {
    pub fn new(grid: TimeGrid, n_sources: usize) -> Self {
        Self {
            alpha: 1.0,
            gamma: 5e-3,
            grid,
            n_sources,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("alpha", self.alpha), ("gamma", self.gamma)] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::invalid(name, format!("must be finite and > 0, got {v}")));
            }
        }
        if self.n_sources == 0 {
            return Err(Error::invalid("n_sources", "must be ≥ 1"));
        }
        Ok(())
    }
}

/// Neumann second-difference matrix scaled by `(T/Δt)²`.
pub fn laplacian(n_times: usize) -> DMatrix<f64> {
    let s = (n_times * n_times) as f64;
    let mut m = DMatrix::zeros(n_times, n_times);
    for j in 0..n_times {
        let ends = j == 0 || j + 1 == n_times;
        m[(j, j)] = if n_times == 1 { 0.0 } else if ends { -s } else { -2.0 * s };
        if j + 1 < n_times {
            m[(j, j + 1)] = s;
            m[(j + 1, j)] = s;
        }
    }
    m
}

/// Covariance `I_{N_s} ⊗ B` for a symmetric positive-definite block `B`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KroneckerCovariance {
    pub block: DMatrix<f64>,
    pub n_sources: usize,
}

impl KroneckerCovariance {
    pub fn new(block: DMatrix<f64>, n_sources: usize) -> Result<Self> {
        if !block.is_square() {
            return Err(Error::Dimension("covariance block must be square".into()));
        }
        let asym = (&block - block.transpose()).amax();
        if asym > 1e-10 * block.amax().max(f64::MIN_POSITIVE) {
            return Err(Error::invalid("covariance", format!("block is not symmetric (max deviation {asym:e})")));
        }
        Ok(Self { block, n_sources })
    }

    pub fn block_len(&self) -> usize {
        self.block.nrows()
    }

    pub fn dim(&self) -> usize {
        self.n_sources * self.block_len()
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let nt = self.block_len();
        let mut c = DMatrix::zeros(self.dim(), self.dim());
        for i in 0..self.n_sources {
            c.view_mut((i * nt, i * nt), (nt, nt)).copy_from(&self.block);
        }
        c
    }

    pub fn diagonal(&self) -> DVector<f64> {
        let nt = self.block_len();
        DVector::from_fn(self.dim(), |k, _| self.block[(k % nt, k % nt)])
    }

    /// `C·X` for a matrix with `dim()` rows.
    pub fn apply(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        let nt = self.block_len();
        let mut out = DMatrix::zeros(x.nrows(), x.ncols());
        for i in 0..self.n_sources {
            let prod = &self.block * x.rows(i * nt, nt);
            out.rows_mut(i * nt, nt).copy_from(&prod);
        }
        out
    }
}

/// Symmetric tridiagonal matrix stored by diagonals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct SymTridiagonal {
    diag: Vec<f64>,
    off: Vec<f64>,
}

impl SymTridiagonal {
    /// Solve `T·x = b` in place (Thomas algorithm; `T` is diagonally dominant here).
    fn solve_in_place(&self, b: &mut [f64]) {
        let n = self.diag.len();
        let mut c = vec![0.0; n];
        let mut denom = self.diag[0];
        b[0] /= denom;
        for j in 1..n {
            c[j - 1] = self.off[j - 1] / denom;
            denom = self.diag[j] - self.off[j - 1] * c[j - 1];
            b[j] = (b[j] - self.off[j - 1] * b[j - 1]) / denom;
        }
        for j in (0..n - 1).rev() {
            b[j] -= c[j] * b[j + 1];
        }
    }

    fn to_dense(&self) -> DMatrix<f64> {
        let n = self.diag.len();
        let mut m = DMatrix::from_diagonal(&DVector::from_column_slice(&self.diag));
        for j in 0..n - 1 {
            m[(j, j + 1)] = self.off[j];
            m[(j + 1, j)] = self.off[j];
        }
        m
    }
}

/// The smoothness prior `N(·, I ⊗ L⁻²)` with `L = α√(Δt/T)(I − γΔ)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SmoothnessPrior {
    pub spec: PriorSpec,
    operator: SymTridiagonal,
    covariance: KroneckerCovariance,
}

/// Build the prior operator and its covariance. `L⁻²` is formed by two
/// tridiagonal solves per column, never by explicit inversion.
pub fn build_prior(spec: &PriorSpec) -> Result<SmoothnessPrior> {
    spec.validate()?;
    let nt = spec.grid.len();
    let h = 1.0 / nt as f64; // Δt/T
    let scale = spec.alpha * h.sqrt();
    let s = spec.gamma / (h * h);
    let diag = (0..nt)
        .map(|j| {
            let ends = j == 0 || j + 1 == nt;
            scale * (1.0 + s * if ends { 1.0 } else { 2.0 })
        })
        .collect();
    let operator = SymTridiagonal {
        diag,
        off: vec![-scale * s; nt - 1],
    };
    let mut block = DMatrix::identity(nt, nt);
    for mut col in block.column_iter_mut() {
        operator.solve_in_place(col.as_mut_slice());
        operator.solve_in_place(col.as_mut_slice());
    }
    let block = (&block + block.transpose()) * 0.5;
    Ok(SmoothnessPrior {
        spec: *spec,
        operator,
        covariance: KroneckerCovariance::new(block, spec.n_sources)?,
    })
}

impl SmoothnessPrior {
    /// The `N_T × N_T` operator `L`.
    pub fn operator(&self) -> DMatrix<f64> {
        self.operator.to_dense()
    }

    pub fn covariance(&self) -> &KroneckerCovariance {
        &self.covariance
    }

    pub fn n_times(&self) -> usize {
        self.spec.grid.len()
    }
}

impl PriorSampler for SmoothnessPrior {
    fn dim(&self) -> usize {
        self.covariance.dim()
    }

    fn draw(&self, rng: &mut ChaCha8Rng, out: &mut DVector<f64>) {
        let nt = self.n_times();
        let xi = standard_normal_vector(rng, self.dim());
        out.copy_from(&xi);
        for chunk in out.as_mut_slice().chunks_mut(nt) {
            self.operator.solve_in_place(chunk);
        }
    }
}

/// Closed-form Gaussian posterior.
///
/// The covariance is kept in factored form `C_s = C − W·Wᵀ` with `W` of size
/// `N × M`; [`GaussianPosterior::covariance`] materialises it.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GaussianPosterior {
    pub mean: DVector<f64>,
    pub std: DVector<f64>,
    prior: KroneckerCovariance,
    reduction: DMatrix<f64>,
}

impl GaussianPosterior {
    pub fn covariance(&self) -> DMatrix<f64> {
        let mut c = self.prior.to_dense();
        c.gemm(-1.0, &self.reduction, &self.reduction.transpose(), 1.0);
        (&c + c.transpose()) * 0.5
    }
}

/// `q_s = q₀ + C·Fᵀ S⁻¹ (d − F q₀)`, `C_s = C − C·Fᵀ S⁻¹ F·C`, `S = Σ + F C Fᵀ`,
/// solved through a Cholesky factorisation of the `M × M` matrix `S`.
pub fn gaussian_posterior(
    f: &DMatrix<f64>,
    d: &DVector<f64>,
    noise_variance: &DVector<f64>,
    prior: &KroneckerCovariance,
    prior_mean: &DVector<f64>,
) -> Result<GaussianPosterior> {
    let (m, n) = f.shape();
    check_noise(noise_variance, m)?;
    if n != prior.dim() || prior_mean.len() != n || d.len() != m {
        return Err(Error::Dimension(format!(
            "F is {m}×{n}, prior has dimension {}, prior mean {}, data {}",
            prior.dim(),
            prior_mean.len(),
            d.len()
        )));
    }
    let cft = prior.apply(&f.transpose());
    let mut s = f * &cft;
    s = (&s + s.transpose()) * 0.5;
    for r in 0..m {
        s[(r, r)] += noise_variance[r];
    }
    let chol: Cholesky<f64, Dyn> = s.clone().cholesky().ok_or_else(|| {
        let eig = s.symmetric_eigenvalues();
        Error::Numerical(format!(
            "innovation covariance is not positive definite (eigenvalue range {:e} … {:e})",
            eig.min(),
            eig.max()
        ))
    })?;
    let innovation = d - f * prior_mean;
    let mean = prior_mean + &cft * chol.solve(&innovation);
    // W = C Fᵀ R⁻ᵀ with S = R Rᵀ
    let mut reduction_t = cft.transpose();
    chol.l_dirty().solve_lower_triangular_mut(&mut reduction_t);
    let reduction = reduction_t.transpose();
    let prior_diag = prior.diagonal();
    let std = DVector::from_fn(n, |k, _| (prior_diag[k] - reduction.row(k).norm_squared()).max(0.0).sqrt());
    Ok(GaussianPosterior {
        mean,
        std,
        prior: prior.clone(),
        reduction,
    })
}

/// Entry-wise `max(0, v)`.
pub fn clip_positive(v: &DVector<f64>) -> DVector<f64> {
    v.map(|x| x.max(0.0))
}

/// Map from the auxiliary variable to emission rates. `Identity` exists to
/// check the sampler against the closed-form posterior.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Link {
    #[default]
    Clip,
    Identity,
}

impl Link {
    pub fn apply(self, v: &DVector<f64>) -> DVector<f64> {
        match self {
            Link::Clip => clip_positive(v),
            Link::Identity => v.clone(),
        }
    }

    fn apply_into(self, v: &DVector<f64>, out: &mut DVector<f64>) {
        match self {
            Link::Clip => out.iter_mut().zip(v.iter()).for_each(|(o, x)| *o = x.max(0.0)),
            Link::Identity => out.copy_from(v),
        }
    }
}

/// Whitened sparse observation map used inside the sampling potential.
struct WhitenedModel {
    f: CsrMatrix<f64>,
    d: DVector<f64>,
}

impl WhitenedModel {
    fn new(f: &DMatrix<f64>, d: &DVector<f64>, noise_variance: &DVector<f64>) -> Self {
        let mut fw = f.clone();
        let mut dw = d.clone();
        for r in 0..f.nrows() {
            let s = noise_variance[r].sqrt();
            fw.row_mut(r).scale_mut(1.0 / s);
            dw[r] /= s;
        }
        Self {
            f: CsrMatrix::from(&fw),
            d: dw,
        }
    }

    /// `½‖Σ^(−1/2)(F q − d)‖²`.
    fn misfit(&self, q: &DVector<f64>) -> f64 {
        self.f
            .row_iter()
            .zip(self.d.iter())
            .map(|(row, &dr)| {
                let pred: f64 = row.col_indices().iter().zip(row.values()).map(|(&c, &v)| v * q[c]).sum();
                (pred - dr).powi(2)
            })
            .sum::<f64>()
            * 0.5
    }
}

/// Smooth non-negative posterior summary.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PositivePosterior {
    /// `q_sp = h(v_PM)`.
    pub mean: DVector<f64>,
    /// Square root of the diagonal of `C_sp`, from every post-burn-in step.
    pub std: DVector<f64>,
    /// `v_PM`, the chain average of the auxiliary variable.
    pub aux_mean: DVector<f64>,
    /// Batch-means standard error of `v_PM`.
    pub aux_mcse: DVector<f64>,
    /// Columns `(h(v_k) − q_sp)/√n` over the stored samples, so that
    /// `C_sp ≈ Y·Yᵀ`.
    pub sample_factor: DMatrix<f64>,
    pub acceptance_rate: f64,
    pub ess: f64,
    pub beta: f64,
    pub n_steps: usize,
    pub burn_in: usize,
    pub link: Link,
}

impl PositivePosterior {
    /// Dense `C_sp` from the stored samples.
    pub fn covariance(&self) -> DMatrix<f64> {
        &self.sample_factor * self.sample_factor.transpose()
    }
}

/// Sample the auxiliary-variable posterior with pCN under the prior
/// `N(h(q_s), C)` and potential `½‖Σ^(−1/2)(F·h(v) − d)‖²`.
pub fn positive_posterior(
    f: &DMatrix<f64>,
    d: &DVector<f64>,
    noise_variance: &DVector<f64>,
    prior: &SmoothnessPrior,
    smooth_mean: &DVector<f64>,
    cfg: &SamplerConfig,
    link: Link,
) -> Result<PositivePosterior> {
    let (m, n) = f.shape();
    check_noise(noise_variance, m)?;
    if n != prior.dim() || smooth_mean.len() != n || d.len() != m {
        return Err(Error::Dimension(format!(
            "F is {m}×{n}, prior has dimension {}, prior mean {}, data {}",
            prior.dim(),
            smooth_mean.len(),
            d.len()
        )));
    }
    let model = WhitenedModel::new(f, d, noise_variance);
    let centre = link.apply(smooth_mean);
    let mut mapped = DVector::zeros(n);
    let mut rates = DVector::zeros(n);
    let potential = |v: &DVector<f64>| {
        link.apply_into(v, &mut rates);
        model.misfit(&rates)
    };

    let burn_in = cfg.burn_in();
    let mut sum_h = DVector::<f64>::zeros(n);
    let mut sum_h2 = DVector::<f64>::zeros(n);
    let summary = pcn_chain(potential, &centre, prior, cfg, |k, v, _| {
        if k >= burn_in {
            link.apply_into(v, &mut mapped);
            sum_h += &mapped;
            sum_h2.zip_apply(&mapped, |s, x| *s += x * x);
        }
    })?;

    let (lo, hi) = ACCEPTANCE_WARN_BAND;
    if !(lo..=hi).contains(&summary.acceptance_rate) {
        log::warn!(
            "pCN acceptance rate {:.3} outside [{lo}, {hi}]; consider retuning β (currently {})",
            summary.acceptance_rate,
            cfg.beta
        );
    }

    let mean = link.apply(&summary.mean);
    let kept = (cfg.n_steps - burn_in) as f64;
    // average of (h − q_sp)² = E[h²] − 2 q_sp E[h] + q_sp²
    let std = DVector::from_fn(n, |k, _| {
        let (eh, eh2) = (sum_h[k] / kept, sum_h2[k] / kept);
        (eh2 - 2.0 * mean[k] * eh + mean[k] * mean[k]).max(0.0).sqrt()
    });
    let ns = summary.samples.len();
    let mut sample_factor = DMatrix::zeros(n, ns);
    let norm = 1.0 / (ns.max(1) as f64).sqrt();
    for (c, s) in summary.samples.iter().enumerate() {
        let h = link.apply(&s.state);
        sample_factor.set_column(c, &((h - &mean) * norm));
    }
    Ok(PositivePosterior {
        mean,
        std,
        aux_mean: summary.mean,
        aux_mcse: summary.mcse,
        sample_factor,
        acceptance_rate: summary.acceptance_rate,
        ess: summary.ess,
        beta: summary.beta,
        n_steps: summary.n_steps,
        burn_in: summary.burn_in,
        link,
    })
}

/// Potential of the positive stage as a standalone closure, for β tuning.
pub fn positive_potential(
    f: &DMatrix<f64>,
    d: &DVector<f64>,
    noise_variance: &DVector<f64>,
    link: Link,
) -> Result<impl FnMut(&DVector<f64>) -> f64> {
    check_noise(noise_variance, f.nrows())?;
    let model = WhitenedModel::new(f, d, noise_variance);
    let mut q = DVector::zeros(f.ncols());
    Ok(move |v: &DVector<f64>| {
        link.apply_into(v, &mut q);
        model.misfit(&q)
    })
}
