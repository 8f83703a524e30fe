//! Synthetic crowds: correlated per-task accuracies plus stratified spammers.
//!
//! Each worker's accuracy vector is drawn from a multivariate normal with
//! a common mean and an equicorrelated covariance, so every pair of task
//! columns has population correlation equal to the task similarity. A
//! pessimistic crowd is then derived by replacing part of each accuracy
//! stratum with low uniform draws: 80% of workers in [0.0, 0.1), 70% in
//! [0.1, 0.2), down to none in [0.8, 0.9), with replacement ceilings
//! 0.9/9, 0.9/8, ..., 0.9/1.

use ndarray::Array2;
use rand::seq::index;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::cholesky;
use crate::matrix::WorkerTaskMatrix;
use crate::scalar::Scalar;
use crate::seed;

/// Which unit the spammer strata are drawn over.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpammerMode {
    /// Strata are formed per task from that task's accuracies and a
    /// selected worker is replaced on that task only.
    #[default]
    PerTask,
    /// Strata are formed from each worker's mean accuracy across tasks and
    /// a selected worker is replaced on every task.
    PerWorker,
}

impl std::str::FromStr for SpammerMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "per_task" => Ok(Self::PerTask),
            "per_worker" => Ok(Self::PerWorker),
            other => Err(Error::Parameter(format!(
                "unknown spammer mode {other:?} (expected per_task or per_worker)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GeneratorConfig<S> {
    /// Target Pearson correlation between any two task columns.
    pub task_similarity: S,
    pub num_workers: usize,
    pub num_tasks: usize,
    pub mean_accuracy: S,
    pub accuracy_stddev: S,
    pub inject_spammers: bool,
    pub spammer_mode: SpammerMode,
    pub seed: u64,
}

impl<S: Scalar> GeneratorConfig<S> {
    /// Mean 0.5, stddev 0.15, spammers off, seed 0.
    pub fn new(task_similarity: f64, num_workers: usize, num_tasks: usize) -> Self {
        Self {
            task_similarity: S::of(task_similarity),
            num_workers,
            num_tasks,
            mean_accuracy: S::half(),
            accuracy_stddev: S::of(0.15),
            inject_spammers: false,
            spammer_mode: SpammerMode::PerTask,
            seed: 0,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_spammers(mut self, inject: bool) -> Self {
        self.inject_spammers = inject;
        self
    }

    pub fn with_spammer_mode(mut self, mode: SpammerMode) -> Self {
        self.spammer_mode = mode;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_workers == 0 || self.num_tasks == 0 {
            return Err(Error::Parameter(format!(
                "need at least one worker and one task, got {}x{}",
                self.num_workers, self.num_tasks
            )));
        }
        let s = self.task_similarity;
        if !s.is_finite() {
            return Err(Error::Parameter(format!("task similarity {s} is not finite")));
        }
        if self.num_tasks < 2 && s > S::zero() {
            return Err(Error::Parameter(
                "a positive task similarity needs at least two tasks".into(),
            ));
        }
        if !(self.mean_accuracy >= S::zero() && self.mean_accuracy <= S::one()) {
            return Err(Error::Parameter(format!(
                "mean accuracy {} not in [0, 1]",
                self.mean_accuracy
            )));
        }
        if !(self.accuracy_stddev > S::zero()) {
            return Err(Error::Parameter(format!(
                "accuracy stddev {} must be positive",
                self.accuracy_stddev
            )));
        }
        Ok(())
    }

    /// σ²·((1 − s)·I + s·11ᵀ).
    pub fn covariance(&self) -> Array2<S> {
        let var = self.accuracy_stddev * self.accuracy_stddev;
        let s = self.task_similarity;
        Array2::from_shape_fn((self.num_tasks, self.num_tasks), |(a, b)| {
            if a == b {
                var
            } else {
                s * var
            }
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Stratum<S> {
    pub lower: S,
    pub upper: S,
    pub transform_fraction: S,
    pub max_accuracy: S,
    /// `transform_fraction` in percent, kept exact for counting.
    pub transform_percent: u32,
}

impl<S: Scalar> Stratum<S> {
    pub fn contains(&self, v: S) -> bool {
        v >= self.lower && v < self.upper
    }

    /// ⌊fraction · members⌋, computed in integers.
    pub fn transform_count(&self, members: usize) -> usize {
        members * self.transform_percent as usize / 100
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpammerSchedule<S> {
    pub strata: Vec<Stratum<S>>,
}

impl<S: Scalar> SpammerSchedule<S> {
    /// Nine windows [j, j + 0.1) for j = 0.0, ..., 0.8 with transform
    /// fraction 0.8 − j and replacement ceiling 0.9 / (9 − 10j).
    pub fn canonical() -> Self {
        let strata = (0..9u32)
            .map(|k| Stratum {
                lower: S::of(k as f64 / 10.0),
                upper: S::of((k + 1) as f64 / 10.0),
                transform_fraction: S::of((8 - k) as f64 / 10.0),
                max_accuracy: S::of(0.9 / (9 - k) as f64),
                transform_percent: (8 - k) * 10,
            })
            .collect();
        Self { strata }
    }

    pub fn stratum_of(&self, v: S) -> Option<usize> {
        self.strata.iter().position(|st| st.contains(v))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeneratedCrowd<S> {
    /// Accuracies after spammer injection (equal to `idealized_matrix`
    /// when injection is off).
    pub matrix: WorkerTaskMatrix<S>,
    pub idealized_matrix: WorkerTaskMatrix<S>,
    /// Worker was replaced on at least one task.
    pub spammer_flags: Vec<bool>,
    /// Cells whose value was replaced.
    pub transformed: Array2<bool>,
}

/// Draws the unclamped M×N sample: each row is μ·1 + L·z with L the
/// Cholesky factor of the covariance and z standard normal.
pub fn sample_unclamped<S: Scalar>(cfg: &GeneratorConfig<S>) -> Result<Array2<S>> {
    cfg.validate()?;
    let (m, n) = (cfg.num_workers, cfg.num_tasks);
    let s = cfg.task_similarity;
    let mut rng = seed::rng(cfg.seed);
    let mean = cfg.mean_accuracy;
    let sd = cfg.accuracy_stddev;

    if s == S::one() {
        // perfectly correlated: one draw per worker repeated across tasks
        return Ok(Array2::from_shape_fn((m, n), {
            let draws: Vec<S> = (0..m)
                .map(|_| mean + sd * S::of(rng.sample::<f64, _>(StandardNormal)))
                .collect();
            move |(i, _)| draws[i]
        }));
    }
    let lower_bound = if n > 1 { -1.0 / (n as f64 - 1.0) } else { f64::NEG_INFINITY };
    if s > S::one() || s.as_f64() <= lower_bound {
        return Err(Error::Covariance(format!(
            "similarity {s} outside ({lower_bound}, 1] for {n} tasks"
        )));
    }
    let l = cholesky(&cfg.covariance())
        .ok_or_else(|| Error::Covariance(format!("similarity {s} with {n} tasks")))?;

    let mut out = Array2::from_elem((m, n), S::zero());
    let mut z = vec![S::zero(); n];
    for i in 0..m {
        for zk in z.iter_mut() {
            *zk = S::of(rng.sample::<f64, _>(StandardNormal));
        }
        for a in 0..n {
            let mut acc = mean;
            for (b, &zb) in z.iter().enumerate().take(a + 1) {
                acc = acc + l[(a, b)] * zb;
            }
            out[(i, a)] = acc;
        }
    }
    Ok(out)
}

/// Fully observed matrix of correlated accuracies, clamped to [0, 1].
pub fn sample_correlated_accuracies<S: Scalar>(
    cfg: &GeneratorConfig<S>,
) -> Result<WorkerTaskMatrix<S>> {
    let raw = sample_unclamped(cfg)?;
    WorkerTaskMatrix::fully_observed(raw.mapv(Scalar::clamp_unit))
}

/// Replaces a stratified share of workers' accuracies with uniform draws
/// on [0, stratum ceiling], per task.
pub fn inject_spammers<S: Scalar>(
    ideal: &WorkerTaskMatrix<S>,
    schedule: &SpammerSchedule<S>,
    seed: u64,
) -> Result<GeneratedCrowd<S>> {
    inject_spammers_with(ideal, schedule, SpammerMode::PerTask, seed)
}

pub fn inject_spammers_with<S: Scalar>(
    ideal: &WorkerTaskMatrix<S>,
    schedule: &SpammerSchedule<S>,
    mode: SpammerMode,
    seed: u64,
) -> Result<GeneratedCrowd<S>> {
    if ideal.observed_count() != ideal.num_workers() * ideal.num_tasks() {
        return Err(Error::InvalidMatrix(
            "spammer injection needs a fully observed matrix".into(),
        ));
    }
    let (m, n) = (ideal.num_workers(), ideal.num_tasks());
    let mut values = ideal.values().clone();
    let mut transformed = Array2::from_elem((m, n), false);
    let mut rng = seed::rng(seed);

    match mode {
        SpammerMode::PerTask => {
            for t in 0..n {
                for stratum in &schedule.strata {
                    let members: Vec<usize> = (0..m)
                        .filter(|&i| stratum.contains(ideal.value(i, t)))
                        .collect();
                    let count = stratum.transform_count(members.len());
                    if count == 0 {
                        continue;
                    }
                    let mut picked = index::sample(&mut rng, members.len(), count).into_vec();
                    picked.sort_unstable();
                    for k in picked {
                        let i = members[k];
                        values[(i, t)] = uniform_upto(&mut rng, stratum.max_accuracy);
                        transformed[(i, t)] = true;
                    }
                }
            }
        }
        SpammerMode::PerWorker => {
            let means: Vec<S> = (0..m)
                .map(|i| {
                    (0..n).fold(S::zero(), |a, t| a + ideal.value(i, t)) / S::of_usize(n)
                })
                .collect();
            for stratum in &schedule.strata {
                let members: Vec<usize> = (0..m).filter(|&i| stratum.contains(means[i])).collect();
                let count = stratum.transform_count(members.len());
                if count == 0 {
                    continue;
                }
                let mut picked = index::sample(&mut rng, members.len(), count).into_vec();
                picked.sort_unstable();
                for k in picked {
                    let i = members[k];
                    for t in 0..n {
                        values[(i, t)] = uniform_upto(&mut rng, stratum.max_accuracy);
                        transformed[(i, t)] = true;
                    }
                }
            }
        }
    }

    let spammer_flags = transformed.rows().into_iter().map(|r| r.iter().any(|&b| b)).collect();
    Ok(GeneratedCrowd {
        matrix: WorkerTaskMatrix::fully_observed(values)?,
        idealized_matrix: ideal.clone(),
        spammer_flags,
        transformed,
    })
}

fn uniform_upto<S: Scalar, R: Rng>(rng: &mut R, max: S) -> S {
    S::of(rng.random_range(0.0..=max.as_f64())).min(max)
}

/// Samples the idealized crowd and, if configured, injects spammers with
/// the canonical schedule. Deterministic in `cfg.seed`.
pub fn generate<S: Scalar>(cfg: &GeneratorConfig<S>) -> Result<GeneratedCrowd<S>> {
    let sample_cfg = GeneratorConfig {
        seed: seed::derive(cfg.seed, &[1]),
        ..cfg.clone()
    };
    let ideal = sample_correlated_accuracies(&sample_cfg)?;
    if cfg.inject_spammers {
        inject_spammers_with(
            &ideal,
            &SpammerSchedule::canonical(),
            cfg.spammer_mode,
            seed::derive(cfg.seed, &[2]),
        )
    } else {
        let (m, n) = (ideal.num_workers(), ideal.num_tasks());
        Ok(GeneratedCrowd {
            matrix: ideal.clone(),
            idealized_matrix: ideal,
            spammer_flags: vec![false; m],
            transformed: Array2::from_elem((m, n), false),
        })
    }
}

/// Sample Pearson correlation of two equal-length columns; `None` when
/// either column is constant.
pub fn pearson<S: Scalar>(a: &[S], b: &[S]) -> Option<f64> {
    let n = a.len();
    if n < 2 || b.len() != n {
        return None;
    }
    let ma = a.iter().map(|x| x.as_f64()).sum::<f64>() / n as f64;
    let mb = b.iter().map(|x| x.as_f64()).sum::<f64>() / n as f64;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let (dx, dy) = (x.as_f64() - ma, y.as_f64() - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    (saa > 0.0 && sbb > 0.0).then(|| sab / (saa * sbb).sqrt())
}
