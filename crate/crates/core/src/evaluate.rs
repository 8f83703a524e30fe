//! Metrics and evaluation protocols.
//!
//! The round-robin protocol draws one training mask per trial at the
//! requested fraction of observed cells. Each task is then held out in
//! turn: its test cells are the observed cells of that column outside the
//! training mask, and every method predicts them from the training cells
//! (which include other workers' cells on the held-out task). RMSE pools
//! the squared errors of all rounds; MA_k ranks the test workers of each
//! round and averages the top-k mean accuracy across rounds.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::factorize::{train_pmf, PmfConfig};
use crate::matrix::{split_masked_task, subsample_mask, DensitySpec, Mask, WorkerTaskMatrix};
use crate::predictors::{fit, rank_by_scores, PredictorKind, PredictorSettings, TaskScorer};
use crate::scalar::Scalar;
use crate::seed;

/// √(Σ(p − a)² / n).
pub fn rmse<S: Scalar>(predicted: &[S], actual: &[S]) -> Result<S> {
    if predicted.len() != actual.len() {
        return Err(Error::Parameter(format!(
            "rmse needs equal lengths, got {} and {}",
            predicted.len(),
            actual.len()
        )));
    }
    if predicted.is_empty() {
        return Err(Error::UndefinedMetric("rmse of zero cells".into()));
    }
    let sse = predicted
        .iter()
        .zip(actual)
        .fold(S::zero(), |acc, (&p, &a)| acc + (p - a) * (p - a));
    Ok((sse / S::of_usize(predicted.len())).sqrt())
}

/// Mean true accuracy of the first `k` workers of `ranking`. The selected
/// accuracies are summed in worker order, so with `k` equal to the
/// population size the result is bit-identical to the plain mean.
pub fn mean_accuracy_at_k<S: Scalar>(ranking: &[usize], true_accuracy: &[S], k: usize) -> Result<S> {
    if k == 0 || k > ranking.len() {
        return Err(Error::Parameter(format!(
            "k = {k} must be in 1..={}",
            ranking.len()
        )));
    }
    let mut chosen = ranking[..k].to_vec();
    chosen.sort_unstable();
    let mut sum = S::zero();
    for w in chosen {
        let a = true_accuracy.get(w).ok_or(Error::IndexOutOfRange {
            what: "worker",
            index: w,
            len: true_accuracy.len(),
        })?;
        sum = sum + *a;
    }
    Ok(sum / S::of_usize(k))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RoundRobinOptions {
    /// Fraction of observed cells used for training.
    pub train_fraction: f64,
    pub row_coverage: bool,
    pub k_values: Vec<usize>,
}

impl RoundRobinOptions {
    pub fn new(train_fraction: f64, k_values: Vec<usize>) -> Self {
        Self {
            train_fraction,
            row_coverage: true,
            k_values,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TaskRecord<S> {
    pub task: usize,
    pub test_cells: usize,
    pub fallback_cells: usize,
    pub rmse: Option<S>,
    /// MA_k for each k not exceeding this task's test worker count.
    pub ma_k: BTreeMap<usize, S>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConfigSnapshot<S> {
    pub options: RoundRobinOptions,
    pub settings: PredictorSettings<S>,
    /// Generator provenance, filled in by callers that synthesized the data.
    pub generator: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalReport<S> {
    pub method: PredictorKind,
    /// Pooled over every test cell; absent when there were none.
    pub rmse: Option<S>,
    /// Mean over tasks of the per-task MA_k.
    pub ma_k: BTreeMap<usize, S>,
    pub per_task: Vec<TaskRecord<S>>,
    /// Share of test cells predicted by a fallback rule.
    pub fallback_fraction: f64,
    pub trial_seed: u64,
    pub config_snapshot: ConfigSnapshot<S>,
}

/// Metrics of one scorer under the round-robin protocol, before they are
/// attached to a method.
#[derive(Debug, Clone, PartialEq)]
pub struct RoundRobinScores<S> {
    pub rmse: Option<S>,
    pub ma_k: BTreeMap<usize, S>,
    pub per_task: Vec<TaskRecord<S>>,
    pub fallback_fraction: f64,
}

/// Scores `scorer` on every held-out task given a fixed training mask.
pub fn score_round_robin<S: Scalar>(
    crowd: &WorkerTaskMatrix<S>,
    train_mask: &Mask,
    scorer: &dyn TaskScorer<S>,
    k_values: &[usize],
) -> Result<RoundRobinScores<S>> {
    let mut sse = S::zero();
    let mut cells = 0usize;
    let mut fallbacks = 0usize;
    let mut per_task = Vec::with_capacity(crowd.num_tasks());

    for j in 0..crowd.num_tasks() {
        let split = split_masked_task(crowd, train_mask, j)?;
        let test: Vec<usize> = (0..crowd.num_workers())
            .filter(|&i| split.test_mask[(i, j)])
            .collect();
        let scores = scorer.score_task(j);
        if scores.len() != crowd.num_workers() {
            return Err(Error::InvalidMatrix(format!(
                "scorer returned {} scores for {} workers",
                scores.len(),
                crowd.num_workers()
            )));
        }
        let predicted: Vec<S> = test.iter().map(|&i| scores[i].value).collect();
        let actual: Vec<S> = test.iter().map(|&i| crowd.value(i, j)).collect();
        let fallback_cells = test.iter().filter(|&&i| scores[i].fallback).count();
        let task_rmse = if test.is_empty() {
            None
        } else {
            Some(rmse(&predicted, &actual)?)
        };
        for (p, a) in predicted.iter().zip(&actual) {
            sse = sse + (*p - *a) * (*p - *a);
        }
        cells += test.len();
        fallbacks += fallback_cells;

        let order = rank_by_scores(&predicted);
        let mut ma_k = BTreeMap::new();
        for &k in k_values {
            if k >= 1 && k <= test.len() {
                ma_k.insert(k, mean_accuracy_at_k(&order, &actual, k)?);
            }
        }
        per_task.push(TaskRecord {
            task: j,
            test_cells: test.len(),
            fallback_cells,
            rmse: task_rmse,
            ma_k,
        });
    }

    let mut ma_k = BTreeMap::new();
    for &k in k_values {
        let vals: Vec<S> = per_task.iter().filter_map(|t| t.ma_k.get(&k).copied()).collect();
        if !vals.is_empty() {
            let sum = vals.iter().fold(S::zero(), |a, &v| a + v);
            ma_k.insert(k, sum / S::of_usize(vals.len()));
        }
    }
    Ok(RoundRobinScores {
        rmse: (cells > 0).then(|| (sse / S::of_usize(cells)).sqrt()),
        ma_k,
        per_task,
        fallback_fraction: if cells > 0 {
            fallbacks as f64 / cells as f64
        } else {
            0.0
        },
    })
}

/// Sub-seed tags.
const MASK_TAG: u64 = 0x6d61736b;
const CV_TAG: u64 = 0x6376;

/// The training mask a round-robin evaluation with `seed` uses.
pub fn round_robin_mask<S: Scalar>(
    crowd: &WorkerTaskMatrix<S>,
    opts: &RoundRobinOptions,
    seed: u64,
) -> Result<Mask> {
    let spec = DensitySpec::new(opts.train_fraction, opts.row_coverage)?;
    Ok(subsample_mask(crowd, spec, seed::derive(seed, &[MASK_TAG]))?.train_mask)
}

/// Runs every method under the round-robin protocol with one shared
/// training mask. Models that do not depend on the held-out task are
/// fitted once and reused across rounds.
pub fn evaluate_round_robin<S: Scalar>(
    crowd: &WorkerTaskMatrix<S>,
    methods: &[PredictorKind],
    opts: &RoundRobinOptions,
    settings: &PredictorSettings<S>,
    seed: u64,
) -> Result<Vec<EvalReport<S>>> {
    if crowd.num_tasks() < 2 {
        return Err(Error::Data("round-robin evaluation needs at least two tasks".into()));
    }
    let train = round_robin_mask(crowd, opts, seed)?;
    methods
        .iter()
        .map(|&kind| {
            let fitted = fit(kind, crowd, &train, settings, seed::derive(seed, &[kind.tag()]))?;
            let scores = score_round_robin(crowd, &train, &fitted, &opts.k_values)?;
            Ok(EvalReport {
                method: kind,
                rmse: scores.rmse,
                ma_k: scores.ma_k,
                per_task: scores.per_task,
                fallback_fraction: scores.fallback_fraction,
                trial_seed: seed,
                config_snapshot: ConfigSnapshot {
                    options: opts.clone(),
                    settings: settings.clone(),
                    generator: None,
                },
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct CvOutcome<S> {
    pub best: PmfConfig<S>,
    /// (λ_W, λ_T, mean validation RMSE) for every evaluated grid point;
    /// empty when the grid had a single point.
    pub table: Vec<(S, S, S)>,
}

/// Grid search over (λ_W, λ_T) ∈ grid × grid by k-fold cross-validation on
/// a `train_fraction` sample of the observed cells. Ties go to the larger λ.
pub fn cross_validate_pmf<S: Scalar>(
    crowd: &WorkerTaskMatrix<S>,
    lambda_grid: &[S],
    folds: usize,
    train_fraction: f64,
    base: &PmfConfig<S>,
    seed: u64,
) -> Result<CvOutcome<S>> {
    if folds < 2 {
        return Err(Error::Parameter(format!("need at least 2 folds, got {folds}")));
    }
    if lambda_grid.is_empty() {
        return Err(Error::Parameter("empty lambda grid".into()));
    }
    if lambda_grid.len() == 1 {
        let l = lambda_grid[0];
        return Ok(CvOutcome {
            best: base.with_lambdas(l, l),
            table: Vec::new(),
        });
    }
    let spec = DensitySpec::new(train_fraction, false)?;
    let sample = subsample_mask(crowd, spec, seed::derive(seed, &[CV_TAG, 0]))?.train_mask;
    let mut cells: Vec<(usize, usize)> = sample
        .indexed_iter()
        .filter(|(_, &b)| b)
        .map(|(c, _)| c)
        .collect();
    if cells.len() < folds {
        return Err(Error::Data(format!(
            "{} training cells cannot form {folds} folds",
            cells.len()
        )));
    }
    {
        use rand::seq::SliceRandom;
        cells.shuffle(&mut seed::rng(seed::derive(seed, &[CV_TAG, 1])));
    }

    let mut table = Vec::new();
    for &lw in lambda_grid {
        for &lt in lambda_grid {
            let cfg = base.with_lambdas(lw, lt);
            let mut total = S::zero();
            for f in 0..folds {
                let mut fold_train = sample.clone();
                let mut held = Vec::new();
                for (idx, &c) in cells.iter().enumerate() {
                    if idx % folds == f {
                        fold_train[c] = false;
                        held.push(c);
                    }
                }
                let model = train_pmf(crowd, &fold_train, &cfg)?;
                let pred: Vec<S> = held.iter().map(|&(i, j)| model.raw(i, j).clamp_unit()).collect();
                let act: Vec<S> = held.iter().map(|&(i, j)| crowd.value(i, j)).collect();
                total = total + rmse(&pred, &act)?;
            }
            table.push((lw, lt, total / S::of_usize(folds)));
        }
    }
    let &(lw, lt, _) = table
        .iter()
        .min_by(|a, b| {
            a.2.partial_cmp(&b.2)
                .unwrap_or(std::cmp::Ordering::Equal)
                // larger lambdas first among equal scores
                .then(b.0.partial_cmp(&a.0).unwrap_or(std::cmp::Ordering::Equal))
                .then(b.1.partial_cmp(&a.1).unwrap_or(std::cmp::Ordering::Equal))
        })
        .expect("non-empty grid");
    Ok(CvOutcome {
        best: base.with_lambdas(lw, lt),
        table,
    })
}
