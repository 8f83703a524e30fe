//! Round-robin evaluation of a matrix read from CSV.

use std::io::Write;
use std::path::Path;

use crate::error::Result;
use crate::evaluate::{evaluate_round_robin, EvalReport, RoundRobinOptions};
use crate::harness::matrix_csv::{ingest_matrix_csv, IngestedMatrix};
use crate::harness::results::format_g6;
use crate::predictors::{PredictorKind, PredictorSettings};

#[derive(Debug, Clone, PartialEq)]
pub struct RealEvalOptions {
    pub methods: Vec<PredictorKind>,
    pub k_values: Vec<usize>,
    /// Rows with fewer examples than this are dropped at ingest.
    pub min_examples: u64,
    pub train_fraction: f64,
    /// Off by default: sparse real matrices often have fewer training cells
    /// than workers.
    pub row_coverage: bool,
    pub seed: u64,
}

impl RealEvalOptions {
    pub fn new(methods: Vec<PredictorKind>, k_values: Vec<usize>) -> Self {
        Self {
            methods,
            k_values,
            min_examples: 0,
            train_fraction: 0.2,
            row_coverage: false,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct RealEvaluation {
    pub data: IngestedMatrix,
    pub reports: Vec<EvalReport<f64>>,
}

pub fn evaluate_real(path: &Path, opts: &RealEvalOptions) -> Result<RealEvaluation> {
    let data = ingest_matrix_csv(path, opts.min_examples)?;
    evaluate_ingested(data, opts)
}

/// Same as [`evaluate_real`] for a matrix already in memory.
pub fn evaluate_ingested(data: IngestedMatrix, opts: &RealEvalOptions) -> Result<RealEvaluation> {
    let rr = RoundRobinOptions {
        row_coverage: opts.row_coverage,
        ..RoundRobinOptions::new(opts.train_fraction, opts.k_values.clone())
    };
    let settings = PredictorSettings::for_tasks(data.matrix.num_tasks());
    let reports = evaluate_round_robin(&data.matrix, &opts.methods, &rr, &settings, opts.seed)?;
    Ok(RealEvaluation { data, reports })
}

/// One row per method and task, then an `all` row per method with the
/// pooled RMSE and task-averaged MA_k.
pub fn write_report_csv<W: Write>(out: W, eval: &RealEvaluation, k_values: &[usize]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut head: Vec<String> = ["method", "task", "test_cells", "rmse"].map(String::from).to_vec();
    head.extend(k_values.iter().map(|k| format!("ma_{k}")));
    head.push("fallback_fraction".into());
    w.write_record(&head)?;

    let cell = |x: Option<f64>| x.map(format_g6).unwrap_or_default();
    for rep in &eval.reports {
        for t in &rep.per_task {
            let mut rec = vec![
                rep.method.to_string(),
                eval.data.task_ids[t.task].clone(),
                t.test_cells.to_string(),
                cell(t.rmse),
            ];
            rec.extend(k_values.iter().map(|k| cell(t.ma_k.get(k).copied())));
            let ff = (t.test_cells > 0).then(|| t.fallback_cells as f64 / t.test_cells as f64);
            rec.push(cell(ff));
            w.write_record(&rec)?;
        }
        let total: usize = rep.per_task.iter().map(|t| t.test_cells).sum();
        let mut rec = vec![rep.method.to_string(), "all".into(), total.to_string(), cell(rep.rmse)];
        rec.extend(k_values.iter().map(|k| cell(rep.ma_k.get(k).copied())));
        rec.push(format_g6(rep.fallback_fraction));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}
