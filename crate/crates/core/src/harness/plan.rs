//! Experiment plans: a flat TOML file naming the sweep axes.
//!
//! ```toml
//! name = "similarity-by-size"
//! similarities = [0.1, 0.4, 0.7]
//! sizes = [[5, 500], [10, 1000]]   # [tasks, workers]
//! densities = [0.2]
//! k_values = [10]
//! methods = ["pmf", "svd", "average", "weighted_average", "random"]
//! trials = 100
//! inject_spammers = true
//! base_seed = 7
//! ```
//!
//! Optional keys: `spammer_mode` (`per_task` | `per_worker`), `mean_accuracy`,
//! `accuracy_stddev`, `lambda_w`, `lambda_t`, `learning_rate`, `max_epochs`,
//! `init_scale`, `center`, `row_coverage`, `similarity_source`
//! (`estimated` | `known`).

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{io_at, Error, Result};
use crate::evaluate::RoundRobinOptions;
use crate::predictors::{PredictorKind, PredictorSettings, SimilaritySource};
use crate::syngen::{GeneratorConfig, SpammerMode};

/// How the weighted average learns task similarity inside a sweep.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlanSimilarity {
    /// Estimated from training cells.
    #[default]
    Estimated,
    /// The generator's similarity for that grid point.
    Known,
}

/// One matrix shape of the sweep.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "[usize; 2]", into = "[usize; 2]")]
pub struct Size {
    pub tasks: usize,
    pub workers: usize,
}

impl From<[usize; 2]> for Size {
    fn from([tasks, workers]: [usize; 2]) -> Self {
        Size { tasks, workers }
    }
}

impl From<Size> for [usize; 2] {
    fn from(s: Size) -> Self {
        [s.tasks, s.workers]
    }
}

fn default_k() -> Vec<usize> {
    vec![10]
}

fn default_methods() -> Vec<PredictorKind> {
    PredictorKind::ALL.to_vec()
}

fn default_trials() -> usize {
    100
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentPlan {
    pub name: String,
    pub similarities: Vec<f64>,
    pub sizes: Vec<Size>,
    pub densities: Vec<f64>,
    #[serde(default = "default_k")]
    pub k_values: Vec<usize>,
    #[serde(default = "default_methods")]
    pub methods: Vec<PredictorKind>,
    #[serde(default = "default_trials")]
    pub trials: usize,
    #[serde(default)]
    pub inject_spammers: bool,
    #[serde(default)]
    pub spammer_mode: SpammerMode,
    #[serde(default)]
    pub base_seed: u64,
    #[serde(default)]
    pub mean_accuracy: Option<f64>,
    #[serde(default)]
    pub accuracy_stddev: Option<f64>,
    #[serde(default)]
    pub lambda_w: Option<f64>,
    #[serde(default)]
    pub lambda_t: Option<f64>,
    #[serde(default)]
    pub learning_rate: Option<f64>,
    #[serde(default)]
    pub max_epochs: Option<usize>,
    #[serde(default)]
    pub init_scale: Option<f64>,
    #[serde(default)]
    pub center: Option<bool>,
    #[serde(default = "yes")]
    pub row_coverage: bool,
    #[serde(default)]
    pub similarity_source: PlanSimilarity,
}

impl ExperimentPlan {
    pub fn from_toml(text: &str) -> Result<Self> {
        let plan: ExperimentPlan = toml::from_str(text).map_err(|e| Error::Plan(e.to_string()))?;
        plan.validate()?;
        Ok(plan)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| io_at(path, e))?;
        Self::from_toml(&text).map_err(|e| match e {
            Error::Plan(msg) => Error::Plan(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("plans always serialize")
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Plan(msg));
        if self.name.is_empty() || self.name.contains([',', '"', '\n', '\r']) {
            return bad(format!("name {:?} must be non-empty without commas, quotes or newlines", self.name));
        }
        if self.similarities.is_empty() || self.sizes.is_empty() || self.densities.is_empty() {
            return bad("similarities, sizes and densities must each list at least one value".into());
        }
        if self.methods.is_empty() {
            return bad("methods must not be empty".into());
        }
        if self.trials == 0 {
            return bad("trials must be at least 1".into());
        }
        if let Some(s) = self.similarities.iter().find(|s| !(0.0..=1.0).contains(*s)) {
            return bad(format!("similarity {s} outside [0, 1]"));
        }
        if let Some(d) = self.densities.iter().find(|d| !(**d > 0.0 && **d <= 1.0)) {
            return bad(format!("density {d} outside (0, 1]"));
        }
        for size in &self.sizes {
            if size.tasks < 2 || size.workers < 1 {
                return bad(format!(
                    "size [{}, {}] needs at least 2 tasks and 1 worker",
                    size.tasks, size.workers
                ));
            }
            if let Some(k) = self.k_values.iter().find(|&&k| k == 0 || k > size.workers) {
                return bad(format!("k = {k} not in 1..={} for size [{}, {}]", size.workers, size.tasks, size.workers));
            }
        }
        if self.k_values.is_empty() {
            return bad("k_values must not be empty".into());
        }
        let mut ks = self.k_values.clone();
        ks.sort_unstable();
        ks.dedup();
        if ks.len() != self.k_values.len() {
            return bad("k_values contains duplicates".into());
        }
        let mut ms = self.methods.clone();
        ms.sort();
        ms.dedup();
        if ms.len() != self.methods.len() {
            return bad("methods contains duplicates".into());
        }
        // Catch bad overrides before any trial runs.
        self.settings(self.sizes[0].tasks, self.similarities[0])
            .pmf
            .validate()
            .map_err(|e| Error::Plan(e.to_string()))?;
        self.generator(self.similarities[0], self.sizes[0], 0)
            .validate()
            .map_err(|e| Error::Plan(e.to_string()))?;
        Ok(())
    }

    /// Number of result rows a complete run produces.
    pub fn row_count(&self) -> usize {
        self.similarities.len() * self.sizes.len() * self.densities.len() * self.methods.len() * self.trials
    }

    pub fn generator(&self, similarity: f64, size: Size, seed: u64) -> GeneratorConfig<f64> {
        let mut cfg = GeneratorConfig::new(similarity, size.workers, size.tasks)
            .with_seed(seed)
            .with_spammers(self.inject_spammers)
            .with_spammer_mode(self.spammer_mode);
        if let Some(m) = self.mean_accuracy {
            cfg.mean_accuracy = m;
        }
        if let Some(s) = self.accuracy_stddev {
            cfg.accuracy_stddev = s;
        }
        cfg
    }

    /// Predictor settings for a grid point; PMF dimensionality and SVD rank
    /// are `tasks - 1`.
    pub fn settings(&self, tasks: usize, similarity: f64) -> PredictorSettings<f64> {
        let mut s = PredictorSettings::for_tasks(tasks);
        let p = &mut s.pmf;
        if let Some(v) = self.lambda_w {
            p.lambda_w = v;
        }
        if let Some(v) = self.lambda_t {
            p.lambda_t = v;
        }
        if let Some(v) = self.learning_rate {
            p.learning_rate = v;
        }
        if let Some(v) = self.max_epochs {
            p.max_epochs = v;
        }
        if let Some(v) = self.init_scale {
            p.init_scale = v;
        }
        if let Some(v) = self.center {
            p.center = v;
        }
        if self.similarity_source == PlanSimilarity::Known {
            s.similarity = SimilaritySource::Known(similarity);
        }
        s
    }

    pub fn options(&self, density: f64) -> RoundRobinOptions {
        RoundRobinOptions {
            row_coverage: self.row_coverage,
            ..RoundRobinOptions::new(density, self.k_values.clone())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
name = "tiny"
similarities = [0.5]
sizes = [[3, 40]]
densities = [0.4]
methods = ["pmf", "average"]
trials = 3
"#;

    #[test]
    fn defaults_fill_in() {
        let p = ExperimentPlan::from_toml(MINIMAL).unwrap();
        assert_eq!(p.k_values, vec![10]);
        assert!(!p.inject_spammers);
        assert!(p.row_coverage);
        assert_eq!(p.sizes[0], Size { tasks: 3, workers: 40 });
        assert_eq!(p.row_count(), 6);
        assert_eq!(p.settings(3, 0.5).pmf.dimensionality, 2);
        assert_eq!(p.settings(3, 0.5).similarity, SimilaritySource::Estimated);
    }

    #[test]
    fn round_trips_through_toml() {
        let p = ExperimentPlan::from_toml(MINIMAL).unwrap();
        assert_eq!(ExperimentPlan::from_toml(&p.to_toml()).unwrap(), p);
    }

    #[test]
    fn overrides_apply() {
        let text = format!(
            "{MINIMAL}lambda_w = 0.1\nmax_epochs = 20\nsimilarity_source = \"known\"\nspammer_mode = \"per_worker\"\n"
        );
        let p = ExperimentPlan::from_toml(&text).unwrap();
        let s = p.settings(3, 0.5);
        assert_eq!(s.pmf.lambda_w, 0.1);
        assert_eq!(s.pmf.lambda_t, 0.01);
        assert_eq!(s.pmf.max_epochs, 20);
        assert_eq!(s.similarity, SimilaritySource::Known(0.5));
        assert_eq!(p.generator(0.5, p.sizes[0], 1).spammer_mode, SpammerMode::PerWorker);
    }

    #[test]
    fn rejects_bad_plans() {
        for (from, to) in [
            ("similarities = [0.5]", "similarities = [1.5]"),
            ("densities = [0.4]", "densities = [0.0]"),
            ("trials = 3", "trials = 0"),
            ("sizes = [[3, 40]]", "sizes = [[1, 40]]"),
            ("methods = [\"pmf\", \"average\"]", "methods = [\"pmf\", \"knn\"]"),
            ("methods = [\"pmf\", \"average\"]", "methods = []"),
            ("trials = 3", "trials = 3\nk_values = [50]"),
            ("trials = 3", "trials = 3\nunknown_key = 1"),
            ("trials = 3", "trials = 3\nlearning_rate = -1.0"),
        ] {
            let text = MINIMAL.replace(from, to);
            let err = ExperimentPlan::from_toml(&text).unwrap_err();
            assert!(matches!(err, Error::Plan(_)), "{to}: {err}");
        }
    }
}
