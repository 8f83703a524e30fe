//! A common prediction interface over the factor models and the baselines.

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use ndarray::Array2;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::factorize::{train_pmf, train_svd, FactorModel, PmfConfig};
use crate::matrix::{check_shape, Mask, WorkerTaskMatrix};
use crate::scalar::Scalar;
use crate::seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PredictorKind {
    Pmf,
    Svd,
    Average,
    WeightedAverage,
    Random,
}

impl PredictorKind {
    pub const ALL: [PredictorKind; 5] = [
        PredictorKind::Pmf,
        PredictorKind::Svd,
        PredictorKind::Average,
        PredictorKind::WeightedAverage,
        PredictorKind::Random,
    ];

    pub fn name(self) -> &'static str {
        match self {
            PredictorKind::Pmf => "pmf",
            PredictorKind::Svd => "svd",
            PredictorKind::Average => "average",
            PredictorKind::WeightedAverage => "weighted_average",
            PredictorKind::Random => "random",
        }
    }

    /// Stable tag for seed derivation.
    pub(crate) fn tag(self) -> u64 {
        self as u64 + 1
    }
}

impl fmt::Display for PredictorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for PredictorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        PredictorKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| {
                Error::Parameter(format!(
                    "unknown method {s:?} (expected one of pmf, svd, average, weighted_average, random)"
                ))
            })
    }
}

/// A prediction and whether it came from a fallback rule rather than the
/// method itself.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate<S> {
    pub value: S,
    pub fallback: bool,
}

impl<S> Estimate<S> {
    fn direct(value: S) -> Self {
        Self {
            value,
            fallback: false,
        }
    }
}

/// Pairwise Pearson correlation between task columns, over workers
/// observed on both tasks.
#[derive(Debug, Clone, PartialEq)]
pub struct TaskSimilarityEstimate<S> {
    /// `None` where fewer than two co-observed workers exist or a column
    /// has zero variance over them.
    pub pairwise: Array2<Option<S>>,
    pub support: Array2<usize>,
}

impl<S: Scalar> TaskSimilarityEstimate<S> {
    pub fn num_tasks(&self) -> usize {
        self.pairwise.nrows()
    }

    pub fn get(&self, a: usize, b: usize) -> Option<S> {
        self.pairwise[(a, b)]
    }

    /// Every off-diagonal pair set to `s`.
    pub fn uniform(num_tasks: usize, s: S, support: usize) -> Self {
        Self {
            pairwise: Array2::from_shape_fn((num_tasks, num_tasks), |(a, b)| {
                Some(if a == b { S::one() } else { s })
            }),
            support: Array2::from_elem((num_tasks, num_tasks), support),
        }
    }
}

pub fn estimate_task_similarity<S: Scalar>(
    m: &WorkerTaskMatrix<S>,
    mask: &Mask,
) -> Result<TaskSimilarityEstimate<S>> {
    check_shape(m, mask)?;
    let n = m.num_tasks();
    let seen = |i: usize, j: usize| mask[(i, j)] && m.is_observed(i, j);
    let mut pairwise = Array2::from_elem((n, n), None);
    let mut support = Array2::from_elem((n, n), 0usize);
    for a in 0..n {
        support[(a, a)] = (0..m.num_workers()).filter(|&i| seen(i, a)).count();
        pairwise[(a, a)] = Some(S::one());
        for b in a + 1..n {
            let (xs, ys): (Vec<f64>, Vec<f64>) = (0..m.num_workers())
                .filter(|&i| seen(i, a) && seen(i, b))
                .map(|i| (m.value(i, a).as_f64(), m.value(i, b).as_f64()))
                .unzip();
            support[(a, b)] = xs.len();
            support[(b, a)] = xs.len();
            let r = crate::syngen::pearson(&xs, &ys).map(|r| S::of(r.clamp(-1.0, 1.0)));
            pairwise[(a, b)] = r;
            pairwise[(b, a)] = r;
        }
    }
    Ok(TaskSimilarityEstimate { pairwise, support })
}

fn mean_of<S: Scalar>(it: impl Iterator<Item = S>) -> Option<S> {
    let (sum, n) = it.fold((S::zero(), 0usize), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| sum / S::of_usize(n))
}

fn global_mean<S: Scalar>(m: &WorkerTaskMatrix<S>, mask: &Mask) -> Option<S> {
    mean_of(m.observed_cells().filter(|&(i, j, _)| mask[(i, j)]).map(|(_, _, v)| v))
}

/// Worker's mean training accuracy on tasks other than `j`; falls back to
/// the global training mean, then to 0.5.
pub fn predict_average<S: Scalar>(m: &WorkerTaskMatrix<S>, mask: &Mask, i: usize, j: usize) -> Estimate<S> {
    average_with(m, mask, i, j, || global_mean(m, mask))
}

fn average_with<S: Scalar>(
    m: &WorkerTaskMatrix<S>,
    mask: &Mask,
    i: usize,
    j: usize,
    global: impl FnOnce() -> Option<S>,
) -> Estimate<S> {
    let own = mean_of(
        (0..m.num_tasks())
            .filter(|&t| t != j && mask[(i, t)] && m.is_observed(i, t))
            .map(|t| m.value(i, t)),
    );
    match own {
        Some(v) => Estimate::direct(v),
        None => Estimate {
            value: global().unwrap_or_else(S::half),
            fallback: true,
        },
    }
}

/// Similarity-weighted mean of the worker's other training accuracies,
/// with weights max(sim(j, t), 0). Falls back to [`predict_average`] when
/// no positive, defined weight exists.
pub fn predict_weighted_average<S: Scalar>(
    m: &WorkerTaskMatrix<S>,
    mask: &Mask,
    sim: &TaskSimilarityEstimate<S>,
    i: usize,
    j: usize,
) -> Estimate<S> {
    weighted_with(m, mask, sim, i, j, || global_mean(m, mask))
}

fn weighted_with<S: Scalar>(
    m: &WorkerTaskMatrix<S>,
    mask: &Mask,
    sim: &TaskSimilarityEstimate<S>,
    i: usize,
    j: usize,
    global: impl FnOnce() -> Option<S>,
) -> Estimate<S> {
    let mut num = S::zero();
    let mut den = S::zero();
    for t in (0..m.num_tasks()).filter(|&t| t != j && mask[(i, t)] && m.is_observed(i, t)) {
        if let Some(w) = sim.get(j, t) {
            let w = w.max(S::zero());
            num = num + w * m.value(i, t);
            den = den + w;
        }
    }
    if den > S::zero() {
        Estimate::direct(num / den)
    } else {
        let mut e = average_with(m, mask, i, j, global);
        e.fallback = true;
        e
    }
}

/// Where the weighted average gets its task similarities.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub enum SimilaritySource<S> {
    /// Pearson estimates from the training cells.
    #[default]
    Estimated,
    /// A known similarity shared by every task pair.
    Known(S),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PredictorSettings<S> {
    pub pmf: PmfConfig<S>,
    pub svd_rank: usize,
    pub similarity: SimilaritySource<S>,
}

impl<S: Scalar> PredictorSettings<S> {
    /// PMF defaults and SVD rank both set to `num_tasks - 1`.
    pub fn for_tasks(num_tasks: usize) -> Self {
        let pmf = PmfConfig::for_tasks(num_tasks);
        Self {
            svd_rank: pmf.dimensionality,
            pmf,
            similarity: SimilaritySource::Estimated,
        }
    }
}

/// A predictor with whatever it precomputed from the training mask.
#[derive(Debug, Clone)]
pub enum FittedPredictor<S> {
    Pmf(FactorModel<S>),
    Svd(FactorModel<S>),
    Average {
        matrix: WorkerTaskMatrix<S>,
        mask: Mask,
        global: Option<S>,
    },
    WeightedAverage {
        matrix: WorkerTaskMatrix<S>,
        mask: Mask,
        global: Option<S>,
        similarity: TaskSimilarityEstimate<S>,
    },
    /// Independent uniform scores per cell; ranking by them is a uniform
    /// random permutation.
    Random(Array2<S>),
}

/// Fits `kind` on the cells of `mask`. `seed` drives PMF initialization
/// and random scores.
pub fn fit<S: Scalar>(
    kind: PredictorKind,
    m: &WorkerTaskMatrix<S>,
    mask: &Mask,
    settings: &PredictorSettings<S>,
    seed: u64,
) -> Result<FittedPredictor<S>> {
    check_shape(m, mask)?;
    Ok(match kind {
        PredictorKind::Pmf => {
            let cfg = PmfConfig {
                seed,
                ..settings.pmf
            };
            FittedPredictor::Pmf(train_pmf(m, mask, &cfg)?)
        }
        PredictorKind::Svd => {
            let rank = settings.svd_rank.min(m.num_workers().min(m.num_tasks()));
            FittedPredictor::Svd(train_svd(m, mask, rank)?)
        }
        PredictorKind::Average => FittedPredictor::Average {
            matrix: m.clone(),
            mask: mask.clone(),
            global: global_mean(m, mask),
        },
        PredictorKind::WeightedAverage => {
            let similarity = match settings.similarity {
                SimilaritySource::Estimated => estimate_task_similarity(m, mask)?,
                SimilaritySource::Known(s) => {
                    TaskSimilarityEstimate::uniform(m.num_tasks(), s, m.num_workers())
                }
            };
            FittedPredictor::WeightedAverage {
                matrix: m.clone(),
                mask: mask.clone(),
                global: global_mean(m, mask),
                similarity,
            }
        }
        PredictorKind::Random => {
            let mut rng = seed::rng(seed);
            FittedPredictor::Random(Array2::from_shape_fn(m.mask().dim(), |_| {
                S::of(rng.random::<f64>())
            }))
        }
    })
}

impl<S: Scalar> FittedPredictor<S> {
    pub fn kind(&self) -> PredictorKind {
        match self {
            FittedPredictor::Pmf(_) => PredictorKind::Pmf,
            FittedPredictor::Svd(_) => PredictorKind::Svd,
            FittedPredictor::Average { .. } => PredictorKind::Average,
            FittedPredictor::WeightedAverage { .. } => PredictorKind::WeightedAverage,
            FittedPredictor::Random(_) => PredictorKind::Random,
        }
    }

    pub fn predict(&self, i: usize, j: usize) -> Estimate<S> {
        match self {
            FittedPredictor::Pmf(model) | FittedPredictor::Svd(model) => {
                Estimate::direct(model.raw(i, j).clamp_unit())
            }
            FittedPredictor::Average { matrix, mask, global } => {
                average_with(matrix, mask, i, j, || *global)
            }
            FittedPredictor::WeightedAverage {
                matrix,
                mask,
                global,
                similarity,
            } => weighted_with(matrix, mask, similarity, i, j, || *global),
            FittedPredictor::Random(scores) => Estimate::direct(scores[(i, j)]),
        }
    }

    pub fn num_workers(&self) -> usize {
        match self {
            FittedPredictor::Pmf(m) | FittedPredictor::Svd(m) => m.num_workers(),
            FittedPredictor::Average { matrix, .. } | FittedPredictor::WeightedAverage { matrix, .. } => {
                matrix.num_workers()
            }
            FittedPredictor::Random(s) => s.nrows(),
        }
    }
}

/// Anything that can score every worker on a task.
pub trait TaskScorer<S> {
    fn score_task(&self, task: usize) -> Vec<Estimate<S>>;
}

impl<S: Scalar> TaskScorer<S> for FittedPredictor<S> {
    fn score_task(&self, task: usize) -> Vec<Estimate<S>> {
        (0..self.num_workers()).map(|i| self.predict(i, task)).collect()
    }
}

/// Indices sorted by score descending, ties by ascending index.
pub fn rank_by_scores<S: Scalar>(scores: &[S]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| {
        scores[b]
            .partial_cmp(&scores[a])
            .unwrap_or(Ordering::Equal)
            .then(a.cmp(&b))
    });
    order
}

/// All workers ordered by predicted accuracy on task `j`.
pub fn rank_workers<S: Scalar>(
    kind: PredictorKind,
    m: &WorkerTaskMatrix<S>,
    mask: &Mask,
    j: usize,
    settings: &PredictorSettings<S>,
    seed: u64,
) -> Result<Vec<usize>> {
    if j >= m.num_tasks() {
        return Err(Error::IndexOutOfRange {
            what: "task",
            index: j,
            len: m.num_tasks(),
        });
    }
    let fitted = fit(kind, m, mask, settings, seed)?;
    let scores: Vec<S> = fitted.score_task(j).into_iter().map(|e| e.value).collect();
    Ok(rank_by_scores(&scores))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use ndarray::array;
    use proptest::prelude::*;

    #[test]
    fn kind_names_round_trip() {
        for k in PredictorKind::ALL {
            assert_eq!(k.name().parse::<PredictorKind>().unwrap(), k);
        }
        assert!("knn".parse::<PredictorKind>().is_err());
    }

    #[test]
    fn similarity_extremes() {
        let m = WorkerTaskMatrix::<f64>::fully_observed(array![[0.1, 0.1, 0.3], [0.2, 0.2, 0.2], [0.3, 0.3, 0.1]]).unwrap();
        let sim = estimate_task_similarity(&m, m.mask()).unwrap();
        assert!((sim.get(0, 1).unwrap() - 1.0).abs() < 1e-12);
        assert!((sim.get(0, 2).unwrap() + 1.0).abs() < 1e-12);
        assert_eq!(sim.get(2, 2), Some(1.0));
        assert_eq!(sim.support[(0, 1)], 3);
    }

    #[test]
    fn similarity_undefined_with_low_support_or_constant_column() {
        let m = WorkerTaskMatrix::<f64>::from_cells(3, 3, [(0, 0, 0.2), (0, 1, 0.4), (1, 0, 0.5), (1, 2, 0.5), (2, 2, 0.5), (2, 0, 0.9)])
            .unwrap();
        let sim = estimate_task_similarity(&m, m.mask()).unwrap();
        assert_eq!(sim.get(0, 1), None); // one co-observed worker
        assert_eq!(sim.support[(0, 1)], 1);
        assert_eq!(sim.get(0, 2), None); // task 2 constant
    }

    #[test]
    fn average_and_fallbacks() {
        let m = WorkerTaskMatrix::<f64>::from_cells(2, 3, [(0, 0, 0.6), (0, 1, 0.8), (0, 2, 0.1), (1, 2, 0.3)]).unwrap();
        let e = predict_average(&m, m.mask(), 0, 2);
        assert!((e.value - 0.7).abs() < 1e-15 && !e.fallback);
        // worker 1 has nothing outside task 2: global mean over training cells
        let e = predict_average(&m, m.mask(), 1, 2);
        assert!(e.fallback);
        assert!((e.value - 1.8 / 4.0).abs() < 1e-15);
        let empty = Array2::from_elem((2, 3), false);
        assert_eq!(predict_average(&m, &empty, 0, 0).value, 0.5);
    }

    #[test]
    fn weighted_average_hand_value() {
        let m = WorkerTaskMatrix::<f64>::from_cells(1, 3, [(0, 0, 0.6), (0, 1, 0.8)]).unwrap();
        let mut sim = TaskSimilarityEstimate::uniform(3, 0.0, 10);
        sim.pairwise[(2, 0)] = Some(0.9);
        sim.pairwise[(2, 1)] = Some(0.1);
        let e = predict_weighted_average(&m, m.mask(), &sim, 0, 2);
        assert!((e.value - 0.62).abs() < 1e-12 && !e.fallback);
    }

    #[test]
    fn weighted_average_negative_and_uniform() {
        let m = WorkerTaskMatrix::<f64>::from_cells(1, 3, [(0, 0, 0.6), (0, 1, 0.8)]).unwrap();
        let neg = TaskSimilarityEstimate::uniform(3, -0.4, 10);
        let e = predict_weighted_average(&m, m.mask(), &neg, 0, 2);
        assert!(e.fallback);
        assert_eq!(e.value, predict_average(&m, m.mask(), 0, 2).value);
        let uni = TaskSimilarityEstimate::uniform(3, 0.3, 10);
        let e = predict_weighted_average(&m, m.mask(), &uni, 0, 2);
        assert!((e.value - predict_average(&m, m.mask(), 0, 2).value).abs() < 1e-15);
    }

    #[test]
    fn rank_ties_by_index() {
        assert_eq!(rank_by_scores(&[0.9, 0.5, 0.9]), vec![0, 2, 1]);
    }

    #[test]
    fn random_rank_is_seeded_permutation() {
        let m = WorkerTaskMatrix::fully_observed(Array2::from_elem((20, 3), 0.5)).unwrap();
        let s = PredictorSettings::for_tasks(3);
        let a = rank_workers(PredictorKind::Random, &m, m.mask(), 1, &s, 7).unwrap();
        let b = rank_workers(PredictorKind::Random, &m, m.mask(), 1, &s, 7).unwrap();
        let c = rank_workers(PredictorKind::Random, &m, m.mask(), 1, &s, 8).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
        let mut sorted = a.clone();
        sorted.sort_unstable();
        assert_eq!(sorted, (0..20).collect::<Vec<_>>());
    }

    #[test]
    fn uniform_similarity_rankings_agree() {
        let crowd = crate::syngen::generate(&crate::GeneratorConfig::<f64>::new(0.5, 200, 4).with_seed(3)).unwrap();
        let split = crate::subsample_mask(&crowd.matrix, crate::DensitySpec::new(0.4, true).unwrap(), 1).unwrap();
        let mut s = PredictorSettings::for_tasks(4);
        s.similarity = SimilaritySource::Known(0.5);
        let avg = rank_workers(PredictorKind::Average, &crowd.matrix, &split.train_mask, 2, &s, 0).unwrap();
        let wavg = rank_workers(PredictorKind::WeightedAverage, &crowd.matrix, &split.train_mask, 2, &s, 0).unwrap();
        assert_eq!(avg, wavg);
    }

    #[test]
    fn pmf_top_ten_beats_population_on_similar_tasks() {
        let cfg = crate::GeneratorConfig::<f64>::new(0.9, 1000, 6).with_seed(12);
        let crowd = crate::syngen::generate(&cfg).unwrap();
        let m = &crowd.matrix;
        let split = crate::subsample_mask(m, crate::DensitySpec::new(0.3, true).unwrap(), 2).unwrap();
        let s = PredictorSettings::for_tasks(6);
        let ranking = rank_workers(PredictorKind::Pmf, m, &split.train_mask, 0, &s, 1).unwrap();
        let top: f64 = ranking[..10].iter().map(|&i| m.value(i, 0)).sum::<f64>() / 10.0;
        let pop = m.values().column(0).mean().unwrap();
        assert!(top > pop, "top10 {top} vs population {pop}");
    }

    proptest! {
        #[test]
        fn baselines_are_convex_combinations(seed in any::<u64>(), rows in 1usize..6, cols in 2usize..6) {
            let mut rng = crate::seed::rng(seed);
            let values = Array2::from_shape_fn((rows, cols), |_| rng.random::<f64>());
            let mask = Array2::from_shape_fn((rows, cols), |_| rng.random::<f64>() < 0.6);
            let m = WorkerTaskMatrix::new(values, mask.clone()).unwrap();
            let sim = estimate_task_similarity(&m, &mask).unwrap();
            for i in 0..rows {
                for j in 0..cols {
                    let others: Vec<f64> = (0..cols).filter(|&t| t != j && mask[(i, t)]).map(|t| m.value(i, t)).collect();
                    for e in [predict_average(&m, &mask, i, j), predict_weighted_average(&m, &mask, &sim, i, j)] {
                        prop_assert!((0.0..=1.0).contains(&e.value));
                        if !e.fallback {
                            let lo = others.iter().cloned().fold(f64::INFINITY, f64::min);
                            let hi = others.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                            prop_assert!(e.value >= lo - 1e-12 && e.value <= hi + 1e-12);
                        }
                    }
                }
            }
        }

        #[test]
        fn ranking_is_permutation_and_monotone_invariant(scores in proptest::collection::vec(0.0f64..1.0, 1..40)) {
            let r = rank_by_scores(&scores);
            let mut sorted = r.clone();
            sorted.sort_unstable();
            prop_assert_eq!(sorted, (0..scores.len()).collect::<Vec<_>>());
            let transformed: Vec<f64> = scores.iter().map(|s| (3.0 * s).exp() + 1.0).collect();
            prop_assert_eq!(rank_by_scores(&transformed), r);
        }
    }
}
