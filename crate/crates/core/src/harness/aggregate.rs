//! Mean and spread of sweep metrics per grid point and method.

use std::collections::BTreeMap;
use std::fmt;
use std::io::Write;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::harness::results::{format_g6, ResultRow};
use crate::predictors::PredictorKind;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Axis {
    Plan,
    Similarity,
    NumTasks,
    NumWorkers,
    Density,
}

impl Axis {
    pub const ALL: [Axis; 5] = [
        Axis::Plan,
        Axis::Similarity,
        Axis::NumTasks,
        Axis::NumWorkers,
        Axis::Density,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Axis::Plan => "plan",
            Axis::Similarity => "similarity",
            Axis::NumTasks => "num_tasks",
            Axis::NumWorkers => "num_workers",
            Axis::Density => "density",
        }
    }

    fn value(self, row: &ResultRow) -> AxisValue {
        match self {
            Axis::Plan => AxisValue::Text(row.plan.clone()),
            Axis::Similarity => AxisValue::Real(row.similarity),
            Axis::NumTasks => AxisValue::Count(row.num_tasks),
            Axis::NumWorkers => AxisValue::Count(row.num_workers),
            Axis::Density => AxisValue::Real(row.density),
        }
    }
}

impl fmt::Display for Axis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Axis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Axis::ALL
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| {
                Error::Parameter(format!(
                    "unknown axis {s:?} (expected plan, similarity, num_tasks, num_workers or density)"
                ))
            })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum AxisValue {
    Text(String),
    Real(f64),
    Count(usize),
}

impl AxisValue {
    fn cmp_key(&self, other: &Self) -> std::cmp::Ordering {
        match (self, other) {
            (AxisValue::Text(a), AxisValue::Text(b)) => a.cmp(b),
            (AxisValue::Real(a), AxisValue::Real(b)) => a.total_cmp(b),
            (AxisValue::Count(a), AxisValue::Count(b)) => a.cmp(b),
            _ => std::cmp::Ordering::Equal,
        }
    }

    fn render(&self) -> String {
        match self {
            AxisValue::Text(s) => s.clone(),
            AxisValue::Real(x) => format_g6(*x),
            AxisValue::Count(n) => n.to_string(),
        }
    }
}

/// Mean and sample standard deviation of one metric over a group's
/// successful trials that reported it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Summary {
    pub mean: f64,
    /// Zero for a single value.
    pub std: f64,
    pub n: usize,
}

impl Summary {
    pub fn of(values: &[f64]) -> Option<Summary> {
        let n = values.len();
        if n == 0 {
            return None;
        }
        let mean = values.iter().sum::<f64>() / n as f64;
        let std = if n > 1 {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
        } else {
            0.0
        };
        Some(Summary { mean, std, n })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AggregateRow {
    pub axes: Vec<AxisValue>,
    pub method: PredictorKind,
    /// Rows in the group, successful or not.
    pub n: usize,
    pub failed: usize,
    pub rmse: Option<Summary>,
    pub ma_k: Vec<(usize, Option<Summary>)>,
    pub fallback_fraction: Option<Summary>,
}

/// Groups rows by the chosen axes and method. Output is sorted by axis
/// values, then method, independent of input order.
pub fn aggregate(rows: &[ResultRow], axes: &[Axis], k_values: &[usize]) -> Result<Vec<AggregateRow>> {
    if rows.is_empty() {
        return Err(Error::NoData("no result rows to aggregate".into()));
    }
    let mut groups: Vec<(Vec<AxisValue>, PredictorKind, Vec<&ResultRow>)> = Vec::new();
    let mut index: BTreeMap<(Vec<String>, PredictorKind), usize> = BTreeMap::new();
    for r in rows {
        let values: Vec<AxisValue> = axes.iter().map(|a| a.value(r)).collect();
        let key = (values.iter().map(AxisValue::render).collect(), r.method);
        let slot = *index.entry(key).or_insert_with(|| {
            groups.push((values, r.method, Vec::new()));
            groups.len() - 1
        });
        groups[slot].2.push(r);
    }
    groups.sort_by(|a, b| {
        a.0.iter()
            .zip(&b.0)
            .map(|(x, y)| x.cmp_key(y))
            .find(|o| o.is_ne())
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.1.cmp(&b.1))
    });

    Ok(groups
        .into_iter()
        .map(|(axes, method, members)| {
            let ok: Vec<&ResultRow> = members.iter().copied().filter(|r| r.is_ok()).collect();
            let collect = |f: &dyn Fn(&ResultRow) -> Option<f64>| -> Option<Summary> {
                Summary::of(&ok.iter().filter_map(|r| f(r)).collect::<Vec<_>>())
            };
            AggregateRow {
                n: members.len(),
                failed: members.len() - ok.len(),
                rmse: collect(&|r| r.rmse),
                ma_k: k_values.iter().map(|&k| (k, collect(&|r| r.ma(k)))).collect(),
                fallback_fraction: collect(&|r| r.fallback_fraction),
                axes,
                method,
            }
        })
        .collect())
}

/// Writes aggregated rows: axis columns, `method`, `n`, `failed`, then
/// `<metric>_mean` and `<metric>_std` for rmse, each MA_k and the fallback
/// fraction.
pub fn write_plot_data<W: Write>(out: W, axes: &[Axis], k_values: &[usize], rows: &[AggregateRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut metrics = vec!["rmse".to_string()];
    metrics.extend(k_values.iter().map(|k| format!("ma_{k}")));
    metrics.push("fallback_fraction".into());

    let mut head: Vec<String> = axes.iter().map(|a| a.name().to_string()).collect();
    head.extend(["method", "n", "failed"].map(String::from));
    for m in &metrics {
        head.push(format!("{m}_mean"));
        head.push(format!("{m}_std"));
    }
    w.write_record(&head)?;

    for r in rows {
        let mut rec: Vec<String> = r.axes.iter().map(AxisValue::render).collect();
        rec.push(r.method.to_string());
        rec.push(r.n.to_string());
        rec.push(r.failed.to_string());
        let mut summaries = vec![r.rmse];
        summaries.extend(r.ma_k.iter().map(|(_, s)| *s));
        summaries.push(r.fallback_fraction);
        for s in summaries {
            match s {
                Some(s) => {
                    rec.push(format_g6(s.mean));
                    rec.push(format_g6(s.std));
                }
                None => rec.extend([String::new(), String::new()]),
            }
        }
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a results file and writes its plot data.
pub fn emit_plot_data(results: &std::path::Path, axes: &[Axis], out: &std::path::Path) -> Result<usize> {
    let table = crate::harness::results::read_results(results)?;
    let agg = aggregate(&table.rows, axes, &table.k_values)?;
    let file = std::io::BufWriter::new(std::fs::File::create(out)?);
    write_plot_data(file, axes, &table.k_values, &agg)?;
    Ok(agg.len())
}
