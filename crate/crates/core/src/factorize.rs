//! Latent factor models for the worker-task matrix.
//!
//! PMF minimizes
//!
//! ```text
//! E = ½ Σ_{(i,j) ∈ train} (R_ij − W_i·T_j)² + λ_W/2 Σ_i ‖W_i‖² + λ_T/2 Σ_j ‖T_j‖²
//! ```
//!
//! by full-batch gradient descent. The SVD model fills unobserved cells
//! with additive row/column means and keeps the top singular triplets.
//! Both produce a [`FactorModel`] so prediction is shared.

use ndarray::{Array2, ArrayView1};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg;
use crate::matrix::{check_shape, Mask, WorkerTaskMatrix};
use crate::scalar::Scalar;
use crate::seed;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PmfConfig<S> {
    pub dimensionality: usize,
    pub lambda_w: S,
    pub lambda_t: S,
    pub learning_rate: S,
    pub max_epochs: usize,
    /// Training stops once an epoch lowers the objective by less than this
    /// fraction. An epoch that raises it does not count as converged.
    pub convergence_tol: S,
    /// Stddev of the zero-mean Gaussian initializer.
    pub init_scale: S,
    /// Fit the factors to R − μ (μ = mean training accuracy) and add μ back
    /// when predicting.
    pub center: bool,
    pub seed: u64,
}

impl<S: Scalar> PmfConfig<S> {
    /// λ_W = λ_T = 0.01, ε = 0.005, 500 epochs, tolerance 1e-6, init 0.1.
    pub fn new(dimensionality: usize) -> Self {
        Self {
            dimensionality,
            lambda_w: S::of(0.01),
            lambda_t: S::of(0.01),
            learning_rate: S::of(0.005),
            max_epochs: 500,
            convergence_tol: S::of(1e-6),
            init_scale: S::of(0.1),
            center: true,
            seed: 0,
        }
    }

    /// Dimensionality `num_tasks - 1` (at least 1).
    pub fn for_tasks(num_tasks: usize) -> Self {
        Self::new(num_tasks.saturating_sub(1).max(1))
    }

    pub fn with_lambdas(mut self, lambda_w: S, lambda_t: S) -> Self {
        self.lambda_w = lambda_w;
        self.lambda_t = lambda_t;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.dimensionality == 0 {
            return Err(Error::Parameter("dimensionality must be at least 1".into()));
        }
        if !(self.learning_rate > S::zero()) {
            return Err(Error::Parameter(format!(
                "learning rate {} must be positive",
                self.learning_rate
            )));
        }
        if self.max_epochs == 0 {
            return Err(Error::Parameter("max_epochs must be at least 1".into()));
        }
        if !(self.lambda_w >= S::zero() && self.lambda_t >= S::zero()) {
            return Err(Error::Parameter("regularization weights must be non-negative".into()));
        }
        if !(self.convergence_tol >= S::zero()) || !(self.init_scale > S::zero()) {
            return Err(Error::Parameter(
                "convergence_tol must be non-negative and init_scale positive".into(),
            ));
        }
        Ok(())
    }
}

/// Worker and task latent vectors. Row i of `worker_factors` is W_i and
/// row j of `task_factors` is T_j (both of length D). Predictions are
/// `offset + W_i·T_j`.
#[derive(Debug, Clone, PartialEq)]
pub struct FactorModel<S> {
    pub worker_factors: Array2<S>,
    pub task_factors: Array2<S>,
    /// Constant added to every dot product; the training mean for centered
    /// PMF, zero otherwise.
    pub offset: S,
    /// Objective at initialization followed by the objective after each
    /// epoch. Empty for SVD models.
    pub objective_trace: Vec<S>,
}

impl<S: Scalar> FactorModel<S> {
    pub fn dimensionality(&self) -> usize {
        self.worker_factors.ncols()
    }

    pub fn num_workers(&self) -> usize {
        self.worker_factors.nrows()
    }

    pub fn num_tasks(&self) -> usize {
        self.task_factors.nrows()
    }

    /// Epochs actually run.
    pub fn epochs(&self) -> usize {
        self.objective_trace.len().saturating_sub(1)
    }

    /// offset + W_i · T_j without clamping.
    pub fn raw(&self, i: usize, j: usize) -> S {
        self.offset + dot(self.worker_factors.row(i), self.task_factors.row(j))
    }
}

fn dot<S: Scalar>(a: ArrayView1<S>, b: ArrayView1<S>) -> S {
    a.iter().zip(b.iter()).fold(S::zero(), |acc, (&x, &y)| acc + x * y)
}

fn sq_norm<S: Scalar>(a: &Array2<S>) -> S {
    a.iter().fold(S::zero(), |acc, &x| acc + x * x)
}

fn check_model<S: Scalar>(model: &FactorModel<S>, m: &WorkerTaskMatrix<S>, mask: &Mask) -> Result<()> {
    check_shape(m, mask)?;
    if model.num_workers() != m.num_workers()
        || model.num_tasks() != m.num_tasks()
        || model.task_factors.ncols() != model.dimensionality()
    {
        return Err(Error::InvalidMatrix(format!(
            "model is {}x{} (D={}) but matrix is {}x{}",
            model.num_workers(),
            model.num_tasks(),
            model.dimensionality(),
            m.num_workers(),
            m.num_tasks()
        )));
    }
    Ok(())
}

/// Training cells: observed and selected by `mask`.
fn train_cells<S: Scalar>(m: &WorkerTaskMatrix<S>, mask: &Mask) -> Vec<(usize, usize, S)> {
    m.observed_cells().filter(|&(i, j, _)| mask[(i, j)]).collect()
}

/// Regularized squared error over the cells of `mask`.
pub fn pmf_objective<S: Scalar>(
    model: &FactorModel<S>,
    m: &WorkerTaskMatrix<S>,
    mask: &Mask,
    cfg: &PmfConfig<S>,
) -> Result<S> {
    check_model(model, m, mask)?;
    let cells = train_cells(m, mask);
    Ok(objective_on(model, &cells, cfg, &mut Vec::new()))
}

/// Objective, leaving the residuals R_ij − W_i·T_j in `residuals`.
fn objective_on<S: Scalar>(
    model: &FactorModel<S>,
    cells: &[(usize, usize, S)],
    cfg: &PmfConfig<S>,
    residuals: &mut Vec<S>,
) -> S {
    residuals.clear();
    let mut sse = S::zero();
    for &(i, j, r) in cells {
        let e = r - model.raw(i, j);
        residuals.push(e);
        sse = sse + e * e;
    }
    let half = S::half();
    half * sse
        + half * cfg.lambda_w * sq_norm(&model.worker_factors)
        + half * cfg.lambda_t * sq_norm(&model.task_factors)
}

/// Analytic gradients of [`pmf_objective`], shaped like the factor
/// matrices (M×D and N×D).
pub fn pmf_gradients<S: Scalar>(
    model: &FactorModel<S>,
    m: &WorkerTaskMatrix<S>,
    mask: &Mask,
    cfg: &PmfConfig<S>,
) -> Result<(Array2<S>, Array2<S>)> {
    check_model(model, m, mask)?;
    let cells = train_cells(m, mask);
    let mut residuals = Vec::new();
    objective_on(model, &cells, cfg, &mut residuals);
    Ok(gradients_on(model, &cells, &residuals, cfg))
}

fn gradients_on<S: Scalar>(
    model: &FactorModel<S>,
    cells: &[(usize, usize, S)],
    residuals: &[S],
    cfg: &PmfConfig<S>,
) -> (Array2<S>, Array2<S>) {
    let mut gw = model.worker_factors.mapv(|w| cfg.lambda_w * w);
    let mut gt = model.task_factors.mapv(|t| cfg.lambda_t * t);
    let d = model.dimensionality();
    for (&(i, j, _), &e) in cells.iter().zip(residuals) {
        for k in 0..d {
            let w = model.worker_factors[(i, k)];
            let t = model.task_factors[(j, k)];
            gw[(i, k)] = gw[(i, k)] - e * t;
            gt[(j, k)] = gt[(j, k)] - e * w;
        }
    }
    (gw, gt)
}

/// Seeded N(0, init_scale²) factors.
pub fn init_model<S: Scalar>(num_workers: usize, num_tasks: usize, cfg: &PmfConfig<S>) -> FactorModel<S> {
    let mut rng = seed::rng(cfg.seed);
    let d = cfg.dimensionality;
    let mut draw = |_| cfg.init_scale * S::of(rng.sample::<f64, _>(StandardNormal));
    let worker_factors = Array2::from_shape_fn((num_workers, d), &mut draw);
    let task_factors = Array2::from_shape_fn((num_tasks, d), &mut draw);
    FactorModel {
        worker_factors,
        task_factors,
        offset: S::zero(),
        objective_trace: Vec::new(),
    }
}

/// One full-batch descent step in place: W ← W − ε∇W, T ← T − ε∇T.
pub fn descend<S: Scalar>(
    model: &mut FactorModel<S>,
    m: &WorkerTaskMatrix<S>,
    mask: &Mask,
    cfg: &PmfConfig<S>,
) -> Result<()> {
    let (gw, gt) = pmf_gradients(model, m, mask, cfg)?;
    model.worker_factors.scaled_add(-cfg.learning_rate, &gw);
    model.task_factors.scaled_add(-cfg.learning_rate, &gt);
    Ok(())
}

/// Full-batch gradient descent from a seeded Gaussian start.
pub fn train_pmf<S: Scalar>(
    m: &WorkerTaskMatrix<S>,
    mask: &Mask,
    cfg: &PmfConfig<S>,
) -> Result<FactorModel<S>> {
    cfg.validate()?;
    check_shape(m, mask)?;
    let cells = train_cells(m, mask);
    if cells.is_empty() {
        return Err(Error::EmptyTrainingMask);
    }
    let mut model = init_model(m.num_workers(), m.num_tasks(), cfg);
    if cfg.center {
        let sum = cells.iter().fold(S::zero(), |a, &(_, _, r)| a + r);
        model.offset = sum / S::of_usize(cells.len());
    }
    let mut residuals = Vec::with_capacity(cells.len());
    let mut objective = objective_on(&model, &cells, cfg, &mut residuals);
    if !objective.is_finite() {
        return Err(Error::Divergence {
            epoch: 0,
            learning_rate: cfg.learning_rate.as_f64(),
        });
    }
    let mut trace = vec![objective];

    for epoch in 1..=cfg.max_epochs {
        let (gw, gt) = gradients_on(&model, &cells, &residuals, cfg);
        model.worker_factors.scaled_add(-cfg.learning_rate, &gw);
        model.task_factors.scaled_add(-cfg.learning_rate, &gt);
        let next = objective_on(&model, &cells, cfg, &mut residuals);
        if !next.is_finite() {
            return Err(Error::Divergence {
                epoch,
                learning_rate: cfg.learning_rate.as_f64(),
            });
        }
        trace.push(next);
        let decrease = (objective - next) / objective.max(S::min_positive_value());
        objective = next;
        if decrease >= S::zero() && decrease < cfg.convergence_tol {
            break;
        }
    }
    model.objective_trace = trace;
    Ok(model)
}

/// clamp(offset + W_i · T_j, 0, 1).
pub fn predict<S: Scalar>(model: &FactorModel<S>, i: usize, j: usize) -> Result<S> {
    if i >= model.num_workers() {
        return Err(Error::IndexOutOfRange {
            what: "worker",
            index: i,
            len: model.num_workers(),
        });
    }
    if j >= model.num_tasks() {
        return Err(Error::IndexOutOfRange {
            what: "task",
            index: j,
            len: model.num_tasks(),
        });
    }
    Ok(model.raw(i, j).clamp_unit())
}

/// Completes the matrix: cells in `mask` keep their value, every other
/// cell becomes row_mean + col_mean − global_mean over the masked cells. A
/// row or column without masked cells uses the global mean in place of its
/// own.
pub fn impute_additive<S: Scalar>(m: &WorkerTaskMatrix<S>, mask: &Mask) -> Result<Array2<S>> {
    check_shape(m, mask)?;
    let (rows, cols) = (m.num_workers(), m.num_tasks());
    let mut row_sum = vec![S::zero(); rows];
    let mut row_n = vec![0usize; rows];
    let mut col_sum = vec![S::zero(); cols];
    let mut col_n = vec![0usize; cols];
    let mut total = S::zero();
    let mut count = 0usize;
    for (i, j, v) in train_cells(m, mask) {
        row_sum[i] = row_sum[i] + v;
        row_n[i] += 1;
        col_sum[j] = col_sum[j] + v;
        col_n[j] += 1;
        total = total + v;
        count += 1;
    }
    if count == 0 {
        return Err(Error::EmptyTrainingMask);
    }
    let global = total / S::of_usize(count);
    let mean = |sum: S, n: usize| if n > 0 { sum / S::of_usize(n) } else { global };
    let row_mean: Vec<S> = row_sum.iter().zip(&row_n).map(|(&s, &n)| mean(s, n)).collect();
    let col_mean: Vec<S> = col_sum.iter().zip(&col_n).map(|(&s, &n)| mean(s, n)).collect();
    Ok(Array2::from_shape_fn((rows, cols), |(i, j)| {
        if mask[(i, j)] && m.is_observed(i, j) {
            m.value(i, j)
        } else {
            row_mean[i] + col_mean[j] - global
        }
    }))
}

/// Rank-`rank` truncated SVD of the imputed completion, split as
/// W = U·Σ^½ and T = V·Σ^½.
pub fn train_svd<S: Scalar>(m: &WorkerTaskMatrix<S>, mask: &Mask, rank: usize) -> Result<FactorModel<S>> {
    let max = m.num_workers().min(m.num_tasks());
    if rank == 0 || rank > max {
        return Err(Error::RankOutOfRange { rank, max });
    }
    let completed = impute_additive(m, mask)?;
    let svd = linalg::svd(&completed);
    let root: Vec<S> = svd.sigma.iter().take(rank).map(|s| s.sqrt()).collect();
    let worker_factors =
        Array2::from_shape_fn((m.num_workers(), rank), |(i, k)| svd.u[(i, k)] * root[k]);
    let task_factors =
        Array2::from_shape_fn((m.num_tasks(), rank), |(j, k)| svd.vt[(k, j)] * root[k]);
    Ok(FactorModel {
        worker_factors,
        task_factors,
        offset: S::zero(),
        objective_trace: Vec::new(),
    })
}
