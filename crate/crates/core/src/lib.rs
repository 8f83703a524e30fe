//! Predicting crowd worker accuracy on tasks they have not done yet.
//!
//! The crate works on a partially observed worker-task accuracy matrix and
//! offers several predictors for the missing cells: probabilistic matrix
//! factorization trained by full-batch gradient descent, truncated SVD over
//! a mean-imputed completion, and two averaging baselines plus random
//! assignment. A synthetic crowd generator (correlated multivariate normal
//! accuracies with stratified spammer injection) and an experiment harness
//! make it possible to sweep task similarity, matrix size, density and
//! spammer presence, and to score each method by RMSE and by the mean true
//! accuracy of its top-k workers.
//!
//! All numerical code is generic over [`Scalar`] (`f32` or `f64`). The
//! aliases at the crate root pin the common `f64` instantiations; the CSV
//! harness works in `f64` only.
//!
//! ```
//! use taskroute::{generate, GeneratorConfig, PmfConfig, train_pmf, predict};
//!
//! let cfg = GeneratorConfig::new(0.7, 200, 5).with_seed(3);
//! let crowd = generate(&cfg).unwrap();
//! let m = &crowd.matrix;
//! let model = train_pmf(m, m.mask(), &PmfConfig::for_tasks(5)).unwrap();
//! let p = predict(&model, 0, 4).unwrap();
//! assert!((0.0..=1.0).contains(&p));
//! ```

pub mod error;
pub mod evaluate;
pub mod factorize;
pub mod harness;
pub mod linalg;
pub mod matrix;
pub mod predictors;
pub mod scalar;
pub mod seed;
pub mod syngen;

pub use error::{Error, Result};
pub use evaluate::{
    cross_validate_pmf, evaluate_round_robin, mean_accuracy_at_k, rmse, CvOutcome, EvalReport,
    RoundRobinOptions, TaskRecord,
};
pub use factorize::{
    impute_additive, pmf_gradients, pmf_objective, predict, train_pmf, train_svd, FactorModel,
    PmfConfig,
};
pub use matrix::{
    density, split_holdout_task, split_masked_task, subsample_mask, DensitySpec, Mask,
    MatrixSplit, WorkerTaskMatrix,
};
pub use predictors::{
    estimate_task_similarity, fit, predict_average, predict_weighted_average, rank_workers,
    Estimate, FittedPredictor, PredictorKind, PredictorSettings, SimilaritySource,
    TaskSimilarityEstimate,
};
pub use scalar::Scalar;
pub use syngen::{
    generate, inject_spammers, sample_correlated_accuracies, GeneratedCrowd, GeneratorConfig,
    SpammerMode, SpammerSchedule, Stratum,
};

/// Double-precision accuracy matrix.
pub type Matrix = WorkerTaskMatrix<f64>;
/// Single-precision accuracy matrix.
pub type Matrix32 = WorkerTaskMatrix<f32>;
/// Double-precision factor model.
pub type Model = FactorModel<f64>;
/// Single-precision factor model.
pub type Model32 = FactorModel<f32>;
/// Double-precision PMF hyperparameters.
pub type Pmf = PmfConfig<f64>;
/// Double-precision generator configuration.
pub type Generator = GeneratorConfig<f64>;
/// Double-precision generated crowd.
pub type Crowd = GeneratedCrowd<f64>;
/// Double-precision evaluation report.
pub type Report = EvalReport<f64>;
