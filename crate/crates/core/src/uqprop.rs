//! Propagation of emission estimates onto a ground-level deposition grid.
//!
//! The deposition over the inversion period at a ground point is
//! `W_dep·Σ_j Δt·c(x, t_j)`, which is linear in `q`. The operator `H` is never
//! stored: its rows are evaluated on demand, and [`DepositionOperator::apply_many`]
//! pushes several emission vectors through one row evaluation.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::plume::PlumeModel;

/// Seconds in a 365-day year.
pub const SECONDS_PER_YEAR: f64 = 31_536_000.0;

/// Regular ground grid over `[x_min, x_max] × [y_min, y_max]`, both ends included.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
    pub n_x: usize,
    pub n_y: usize,
}

impl GridSpec {
    pub fn new(x: (f64, f64), y: (f64, f64), n_x: usize, n_y: usize) -> Result<Self> {
        let g = Self {
            x_min: x.0,
            x_max: x.1,
            y_min: y.0,
            y_max: y.1,
            n_x,
            n_y,
        };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.x_max > self.x_min) || !(self.y_max > self.y_min) {
            return Err(Error::invalid("grid", "bounds must satisfy x_max > x_min and y_max > y_min"));
        }
        if self.n_x < 2 || self.n_y < 2 {
            return Err(Error::invalid("grid", "needs at least 2 points per axis"));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.n_x * self.n_y
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dx(&self) -> f64 {
        (self.x_max - self.x_min) / (self.n_x - 1) as f64
    }

    pub fn dy(&self) -> f64 {
        (self.y_max - self.y_min) / (self.n_y - 1) as f64
    }

    /// Ground point of cell `c`; cells run along x first, then y.
    pub fn point(&self, c: usize) -> [f64; 3] {
        let (ix, iy) = (c % self.n_x, c / self.n_x);
        [self.x_min + ix as f64 * self.dx(), self.y_min + iy as f64 * self.dy(), 0.0]
    }
}

/// Matrix-free deposition operator `H` (`n_cells × N`).
#[derive(Debug, Clone)]
pub struct DepositionOperator<'a> {
    pub grid: GridSpec,
    model: &'a PlumeModel,
}

impl<'a> DepositionOperator<'a> {
    pub fn new(grid: GridSpec, model: &'a PlumeModel) -> Result<Self> {
        grid.validate()?;
        Ok(Self { grid, model })
    }

    pub fn n_rows(&self) -> usize {
        self.grid.len()
    }

    pub fn n_cols(&self) -> usize {
        self.model.n_sources() * self.model.n_times()
    }

    /// Row `c` in source-major column order, kg·m⁻² per kg·s⁻¹.
    pub fn row(&self, c: usize) -> Vec<f64> {
        let (ns, nt) = (self.model.n_sources(), self.model.n_times());
        let table = self.model.kernel_table(self.grid.point(c));
        let scale = self.model.particle.w_dep * self.model.wind.grid.dt;
        let mut row = vec![0.0; ns * nt];
        for j in 0..nt {
            for i in 0..ns {
                row[i * nt + j] = scale * table[j * ns + i];
            }
        }
        row
    }

    /// `H·Q` for the columns of `q`; each row of `H` is evaluated once.
    pub fn apply_many(&self, q: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if q.nrows() != self.n_cols() {
            return Err(Error::Dimension(format!("H has {} columns, input has {} rows", self.n_cols(), q.nrows())));
        }
        let rows: Vec<Vec<f64>> = (0..self.n_rows())
            .into_par_iter()
            .map(|c| {
                let h = DVector::from_vec(self.row(c));
                q.tr_mul(&h).iter().copied().collect()
            })
            .collect();
        Ok(DMatrix::from_fn(self.n_rows(), q.ncols(), |r, k| rows[r][k]))
    }

    pub fn apply(&self, q: &DVector<f64>) -> Result<DVector<f64>> {
        let out = self.apply_many(&DMatrix::from_column_slice(q.len(), 1, q.as_slice()))?;
        Ok(out.column(0).into_owned())
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let rows: Vec<Vec<f64>> = (0..self.n_rows()).into_par_iter().map(|c| self.row(c)).collect();
        DMatrix::from_fn(self.n_rows(), self.n_cols(), |r, k| rows[r][k])
    }
}

/// Leading eigenpairs of a covariance, `C ≈ V·diag(λ)·Vᵀ`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LowRankFactors {
    /// Non-increasing, non-negative.
    pub values: DVector<f64>,
    /// Orthonormal columns, one per retained eigenvalue.
    pub vectors: DMatrix<f64>,
}

impl LowRankFactors {
    pub fn rank(&self) -> usize {
        self.values.len()
    }

    pub fn zeros(dim: usize, rank: usize) -> Self {
        Self {
            values: DVector::zeros(rank),
            vectors: DMatrix::zeros(dim, rank),
        }
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let scaled = DMatrix::from_fn(self.vectors.nrows(), self.rank(), |r, k| self.vectors[(r, k)] * self.values[k]);
        scaled * self.vectors.transpose()
    }

    /// Eigenpairs of `C = Y·Yᵀ` from the small Gram matrix `Yᵀ·Y`.
    /// `n_e = None` keeps every non-zero eigenvalue.
    pub fn from_sample_factor(y: &DMatrix<f64>, n_e: Option<usize>) -> Result<Self> {
        let k = y.ncols();
        if k == 0 {
            return Ok(Self::zeros(y.nrows(), 0));
        }
        let gram = y.tr_mul(y);
        let gram = (&gram + gram.transpose()) * 0.5;
        let (values, basis) = sorted_eigen(gram);
        let keep = n_e.unwrap_or(k).min(k);
        let top = values.max().max(0.0);
        let floor = top * f64::EPSILON * k as f64;
        let mut vals = Vec::with_capacity(keep);
        let mut vecs = Vec::with_capacity(keep);
        for e in 0..keep {
            let lam = values[e];
            if !(lam > floor) {
                // a null direction: its eigenvector is undetermined, contribute nothing
                vals.push(0.0);
                vecs.push(DVector::zeros(y.nrows()));
                continue;
            }
            vals.push(lam);
            vecs.push(y * basis.column(e) / lam.sqrt());
        }
        Ok(Self {
            values: DVector::from_vec(vals),
            vectors: DMatrix::from_columns(&vecs),
        })
    }
}

fn sorted_eigen(m: DMatrix<f64>) -> (DVector<f64>, DMatrix<f64>) {
    let eig = SymmetricEigen::new(m);
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let values = DVector::from_iterator(order.len(), order.iter().map(|&i| eig.eigenvalues[i]));
    let vectors = eig.eigenvectors.select_columns(order.iter());
    (values, vectors)
}

/// Keep the `n_e` largest eigenpairs of a symmetric covariance. Negative
/// eigenvalues (round-off) are clamped to zero.
pub fn lowrank_truncate(c: &DMatrix<f64>, n_e: usize) -> Result<LowRankFactors> {
    if !c.is_square() {
        return Err(Error::Dimension("covariance must be square".into()));
    }
    let n = c.nrows();
    if n_e == 0 || n_e > n {
        return Err(Error::invalid("n_e", format!("must lie in 1..={n}, got {n_e}")));
    }
    let asym = (c - c.transpose()).amax();
    if asym > 1e-10 * c.amax().max(f64::MIN_POSITIVE) {
        return Err(Error::invalid("covariance", format!("not symmetric (max deviation {asym:e})")));
    }
    let (mut values, vectors) = sorted_eigen((c + c.transpose()) * 0.5);
    let negative = values.iter().filter(|&&v| v < 0.0).count();
    if negative > 0 {
        log::info!(
            "clamping {negative} negative eigenvalues (most negative {:e}) to zero",
            values.min()
        );
        values.apply(|v| *v = v.max(0.0));
    }
    Ok(LowRankFactors {
        values: values.rows(0, n_e).into_owned(),
        vectors: vectors.columns(0, n_e).into_owned(),
    })
}

/// Deposition mean and standard deviation per grid point over the inversion period.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DepositionGrid {
    pub grid: GridSpec,
    /// kg·m⁻²
    pub mean: Vec<f64>,
    /// kg·m⁻²
    pub std: Vec<f64>,
    pub n_e: usize,
    pub eigenvalues: Vec<f64>,
}

/// `mean = H·q`, `std² = Σ_e λ_e (H·v_e)²`, with `n_e + 1` forward applications
/// sharing one evaluation of `H`.
pub fn deposition_stats(h: &DepositionOperator, q: &DVector<f64>, factors: &LowRankFactors) -> Result<DepositionGrid> {
    if q.len() != h.n_cols() || factors.vectors.nrows() != h.n_cols() {
        return Err(Error::Dimension(format!(
            "H has {} columns, q has {} entries, factors have {} rows",
            h.n_cols(),
            q.len(),
            factors.vectors.nrows()
        )));
    }
    let ne = factors.rank();
    let mut inputs = DMatrix::zeros(h.n_cols(), ne + 1);
    inputs.set_column(0, q);
    inputs.columns_mut(1, ne).copy_from(&factors.vectors);
    let out = h.apply_many(&inputs)?;
    let mean = out.column(0).iter().copied().collect();
    let std = (0..h.n_rows())
        .map(|r| (0..ne).map(|e| factors.values[e] * out[(r, e + 1)].powi(2)).sum::<f64>().sqrt())
        .collect();
    Ok(DepositionGrid {
        grid: h.grid,
        mean,
        std,
        n_e: ne,
        eigenvalues: factors.values.iter().copied().collect(),
    })
}

/// Total annual emission (tonne·yr⁻¹): per-source time-mean rates summed over
/// sources and extrapolated over a year.
pub fn annualize(q: &DVector<f64>, n_times: usize) -> Result<f64> {
    if n_times == 0 || !q.len().is_multiple_of(n_times) {
        return Err(Error::Dimension(format!("{} rates do not split into blocks of {n_times}", q.len())));
    }
    Ok(q.sum() / n_times as f64 * SECONDS_PER_YEAR / 1000.0)
}
