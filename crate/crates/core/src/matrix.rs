//! Partially observed worker-task accuracy matrices, masks and splits.

use ndarray::Array2;
use rand::seq::index;
use rand::Rng;

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::seed;

/// Boolean cell mask, `true` = cell belongs to the set.
pub type Mask = Array2<bool>;

/// M workers by N tasks; cell (i, j) holds worker i's accuracy on task j
/// where `mask[(i, j)]` is set. Unobserved cells hold zero.
#[derive(Debug, Clone, PartialEq)]
pub struct WorkerTaskMatrix<S> {
    values: Array2<S>,
    mask: Mask,
}

impl<S: Scalar> WorkerTaskMatrix<S> {
    pub fn new(values: Array2<S>, mask: Mask) -> Result<Self> {
        if values.dim() != mask.dim() {
            return Err(Error::InvalidMatrix(format!(
                "values are {:?} but mask is {:?}",
                values.dim(),
                mask.dim()
            )));
        }
        let (m, n) = values.dim();
        if m == 0 || n == 0 {
            return Err(Error::InvalidMatrix(format!("empty shape {m}x{n}")));
        }
        let mut values = values;
        for ((i, j), v) in values.indexed_iter_mut() {
            if mask[(i, j)] {
                if !(*v >= S::zero() && *v <= S::one()) {
                    return Err(Error::InvalidMatrix(format!(
                        "cell ({i}, {j}) = {v} outside [0, 1]"
                    )));
                }
            } else {
                *v = S::zero();
            }
        }
        Ok(Self { values, mask })
    }

    pub fn fully_observed(values: Array2<S>) -> Result<Self> {
        let mask = Array2::from_elem(values.dim(), true);
        Self::new(values, mask)
    }

    /// Builds a matrix from `(worker, task, accuracy)` triples; cells not
    /// listed stay unobserved. A repeated cell keeps the last value.
    pub fn from_cells<I>(num_workers: usize, num_tasks: usize, cells: I) -> Result<Self>
    where
        I: IntoIterator<Item = (usize, usize, S)>,
    {
        let mut values = Array2::from_elem((num_workers, num_tasks), S::zero());
        let mut mask = Array2::from_elem((num_workers, num_tasks), false);
        for (i, j, v) in cells {
            if i >= num_workers {
                return Err(Error::IndexOutOfRange {
                    what: "worker",
                    index: i,
                    len: num_workers,
                });
            }
            if j >= num_tasks {
                return Err(Error::IndexOutOfRange {
                    what: "task",
                    index: j,
                    len: num_tasks,
                });
            }
            values[(i, j)] = v;
            mask[(i, j)] = true;
        }
        Self::new(values, mask)
    }

    pub fn num_workers(&self) -> usize {
        self.values.nrows()
    }

    pub fn num_tasks(&self) -> usize {
        self.values.ncols()
    }

    pub fn values(&self) -> &Array2<S> {
        &self.values
    }

    pub fn mask(&self) -> &Mask {
        &self.mask
    }

    pub fn is_observed(&self, i: usize, j: usize) -> bool {
        self.mask[(i, j)]
    }

    /// Raw stored value; zero for unobserved cells.
    pub fn value(&self, i: usize, j: usize) -> S {
        self.values[(i, j)]
    }

    pub fn get(&self, i: usize, j: usize) -> Option<S> {
        self.mask[(i, j)].then(|| self.values[(i, j)])
    }

    pub fn observed_count(&self) -> usize {
        self.mask.iter().filter(|&&b| b).count()
    }

    /// Observed cells in row-major order.
    pub fn observed_cells(&self) -> impl Iterator<Item = (usize, usize, S)> + '_ {
        self.mask
            .indexed_iter()
            .filter(|(_, &b)| b)
            .map(|((i, j), _)| (i, j, self.values[(i, j)]))
    }

    /// Same values, restricted to the cells set in `mask` (which must be a
    /// subset of this matrix's observations).
    pub fn restrict(&self, mask: &Mask) -> Result<Self> {
        check_shape(self, mask)?;
        let mask = mask & &self.mask;
        Self::new(self.values.clone(), mask)
    }

    pub fn map_values<T: Scalar>(&self, f: impl Fn(S) -> T) -> WorkerTaskMatrix<T> {
        WorkerTaskMatrix {
            values: self.values.mapv(f),
            mask: self.mask.clone(),
        }
    }
}

pub(crate) fn check_shape<S: Scalar>(m: &WorkerTaskMatrix<S>, mask: &Mask) -> Result<()> {
    if mask.dim() != m.values.dim() {
        return Err(Error::InvalidMatrix(format!(
            "mask is {:?} but matrix is {:?}",
            mask.dim(),
            m.values.dim()
        )));
    }
    Ok(())
}

/// Disjoint train and test cell sets drawn from a matrix's observations.
#[derive(Debug, Clone, PartialEq)]
pub struct MatrixSplit {
    pub train_mask: Mask,
    pub test_mask: Mask,
}

impl MatrixSplit {
    /// Checks disjointness and containment in `observed`.
    pub fn is_consistent_with(&self, observed: &Mask) -> bool {
        self.train_mask.dim() == observed.dim()
            && self.test_mask.dim() == observed.dim()
            && ndarray::Zip::from(&self.train_mask)
                .and(&self.test_mask)
                .and(observed)
                .all(|&tr, &te, &ob| !(tr && te) && (!(tr || te) || ob))
    }

    pub fn train_count(&self) -> usize {
        self.train_mask.iter().filter(|&&b| b).count()
    }

    pub fn test_count(&self) -> usize {
        self.test_mask.iter().filter(|&&b| b).count()
    }
}

/// How many observed cells to keep for training.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DensitySpec {
    /// Fraction of the observed cells that go to training, in (0, 1].
    pub fraction: f64,
    /// Every worker with at least one observation keeps one in training.
    pub guarantee_row_coverage: bool,
}

impl DensitySpec {
    pub fn new(fraction: f64, guarantee_row_coverage: bool) -> Result<Self> {
        if !(fraction > 0.0 && fraction <= 1.0) {
            return Err(Error::Parameter(format!(
                "density fraction {fraction} not in (0, 1]"
            )));
        }
        Ok(Self {
            fraction,
            guarantee_row_coverage,
        })
    }
}

/// Observed cells / total cells.
pub fn density<S: Scalar>(m: &WorkerTaskMatrix<S>) -> f64 {
    m.observed_count() as f64 / (m.num_workers() * m.num_tasks()) as f64
}

/// Samples `round(fraction * observed)` training cells uniformly without
/// replacement; the rest of the observed cells become the test set.
///
/// With row coverage on, one cell per non-empty row is drawn first
/// (uniformly within the row) and the remaining quota is filled uniformly
/// from what is left.
pub fn subsample_mask<S: Scalar>(
    m: &WorkerTaskMatrix<S>,
    spec: DensitySpec,
    seed: u64,
) -> Result<MatrixSplit> {
    let spec = DensitySpec::new(spec.fraction, spec.guarantee_row_coverage)?;
    let (rows, cols) = m.values.dim();
    let observed: Vec<(usize, usize)> = m.observed_cells().map(|(i, j, _)| (i, j)).collect();
    let quota = (spec.fraction * observed.len() as f64).round() as usize;
    let mut rng = seed::rng(seed);
    let mut train = Array2::from_elem((rows, cols), false);

    let mut remaining: Vec<(usize, usize)> = if spec.guarantee_row_coverage {
        let mut per_row: Vec<Vec<usize>> = vec![Vec::new(); rows];
        for &(i, j) in &observed {
            per_row[i].push(j);
        }
        let nonempty = per_row.iter().filter(|r| !r.is_empty()).count();
        if nonempty > quota {
            return Err(Error::CoverageInfeasible {
                quota,
                rows: nonempty,
            });
        }
        for (i, row) in per_row.iter().enumerate() {
            if !row.is_empty() {
                let j = row[rng.random_range(0..row.len())];
                train[(i, j)] = true;
            }
        }
        observed.iter().copied().filter(|&c| !train[c]).collect()
    } else {
        observed.clone()
    };

    let already = observed.len() - remaining.len();
    let extra = quota - already;
    let mut picked: Vec<usize> = index::sample(&mut rng, remaining.len(), extra).into_vec();
    picked.sort_unstable();
    for k in picked {
        train[remaining[k]] = true;
    }
    remaining.clear();

    let test = &m.mask & &train.mapv(|b| !b);
    Ok(MatrixSplit {
        train_mask: train,
        test_mask: test,
    })
}

/// Tests on every observed cell of `held_task`, trains on all other
/// observed cells.
pub fn split_holdout_task<S: Scalar>(m: &WorkerTaskMatrix<S>, held_task: usize) -> Result<MatrixSplit> {
    if held_task >= m.num_tasks() {
        return Err(Error::IndexOutOfRange {
            what: "task",
            index: held_task,
            len: m.num_tasks(),
        });
    }
    let mut test = Array2::from_elem(m.mask.dim(), false);
    test.column_mut(held_task).assign(&m.mask.column(held_task));
    let train = &m.mask & &test.mapv(|b| !b);
    Ok(MatrixSplit {
        train_mask: train,
        test_mask: test,
    })
}

/// Round-robin split used by the evaluation protocol: the training mask is
/// kept as given, and the test set is every observed cell of `held_task`
/// that training does not see.
pub fn split_masked_task<S: Scalar>(
    m: &WorkerTaskMatrix<S>,
    train_mask: &Mask,
    held_task: usize,
) -> Result<MatrixSplit> {
    check_shape(m, train_mask)?;
    if held_task >= m.num_tasks() {
        return Err(Error::IndexOutOfRange {
            what: "task",
            index: held_task,
            len: m.num_tasks(),
        });
    }
    let train = train_mask & &m.mask;
    let mut test = Array2::from_elem(m.mask.dim(), false);
    for i in 0..m.num_workers() {
        test[(i, held_task)] = m.mask[(i, held_task)] && !train[(i, held_task)];
    }
    Ok(MatrixSplit {
        train_mask: train,
        test_mask: test,
    })
}
