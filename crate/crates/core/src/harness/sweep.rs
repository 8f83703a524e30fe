//! Running an experiment plan trial by trial.

use std::collections::HashSet;
use std::fs::OpenOptions;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;

use crate::error::Result;
use crate::evaluate::evaluate_round_robin;
use crate::harness::plan::{ExperimentPlan, Size};
use crate::harness::results::{read_results_from, ResultRow, ResultWriter, RowKey, STATUS_OK};
use crate::predictors::PredictorKind;
use crate::seed;
use crate::syngen::generate;

/// Sub-seed tag separating evaluation randomness from crowd generation.
const EVAL_TAG: u64 = 0x6576616c;

/// One (grid point, trial) unit of work.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrialPoint {
    pub similarity_index: usize,
    pub size_index: usize,
    pub density_index: usize,
    pub similarity: f64,
    pub size: Size,
    pub density: f64,
    pub trial: usize,
    pub seed: u64,
}

/// Seed of one trial; depends only on the axis indices, so extending an
/// axis leaves existing trials unchanged.
pub fn trial_seed(base_seed: u64, similarity_index: usize, size_index: usize, density_index: usize, trial: usize) -> u64 {
    seed::derive(
        base_seed,
        &[
            similarity_index as u64,
            size_index as u64,
            density_index as u64,
            trial as u64,
        ],
    )
}

/// Every trial of the plan in output order: similarity, then size, then
/// density, then trial.
pub fn trial_points(plan: &ExperimentPlan) -> Vec<TrialPoint> {
    let mut out = Vec::with_capacity(plan.row_count() / plan.methods.len());
    for (si, &similarity) in plan.similarities.iter().enumerate() {
        for (zi, &size) in plan.sizes.iter().enumerate() {
            for (di, &density) in plan.densities.iter().enumerate() {
                for trial in 0..plan.trials {
                    out.push(TrialPoint {
                        similarity_index: si,
                        size_index: zi,
                        density_index: di,
                        similarity,
                        size,
                        density,
                        trial,
                        seed: trial_seed(plan.base_seed, si, zi, di, trial),
                    });
                }
            }
        }
    }
    out
}

/// Runs one trial for the given methods. Failures become rows with an
/// error status rather than errors.
pub fn run_trial(plan: &ExperimentPlan, point: &TrialPoint, methods: &[PredictorKind]) -> Vec<ResultRow> {
    let row = |method, status: String, ms: f64| ResultRow {
        plan: plan.name.clone(),
        similarity: point.similarity,
        num_tasks: point.size.tasks,
        num_workers: point.size.workers,
        density: point.density,
        method,
        trial: point.trial,
        seed: point.seed,
        rmse: None,
        ma_k: plan.k_values.iter().map(|&k| (k, None)).collect(),
        fallback_fraction: None,
        status,
        duration_ms: ms,
    };

    let start = Instant::now();
    let crowd = match generate(&plan.generator(point.similarity, point.size, point.seed)) {
        Ok(c) => c,
        Err(e) => {
            let ms = start.elapsed().as_secs_f64() * 1e3;
            return methods.iter().map(|&m| row(m, e.to_string(), ms)).collect();
        }
    };
    let generate_ms = start.elapsed().as_secs_f64() * 1e3;
    let opts = plan.options(point.density);
    let settings = plan.settings(point.size.tasks, point.similarity);
    let eval_seed = seed::derive(point.seed, &[EVAL_TAG]);

    methods
        .iter()
        .map(|&method| {
            let t = Instant::now();
            let outcome = evaluate_round_robin(&crowd.matrix, &[method], &opts, &settings, eval_seed);
            let ms = generate_ms + t.elapsed().as_secs_f64() * 1e3;
            match outcome {
                Ok(mut reports) => {
                    let rep = reports.pop().expect("one report per method");
                    ResultRow {
                        rmse: rep.rmse,
                        ma_k: plan.k_values.iter().map(|&k| (k, rep.ma_k.get(&k).copied())).collect(),
                        fallback_fraction: Some(rep.fallback_fraction),
                        ..row(method, STATUS_OK.into(), ms)
                    }
                }
                Err(e) => row(method, e.to_string(), ms),
            }
        })
        .collect()
}

/// All rows of a plan in output order, without touching the filesystem.
pub fn run_plan(plan: &ExperimentPlan) -> Result<Vec<ResultRow>> {
    plan.validate()?;
    Ok(trial_points(plan)
        .par_iter()
        .map(|p| run_trial(plan, p, &plan.methods))
        .collect::<Vec<_>>()
        .into_iter()
        .flatten()
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct SweepSummary {
    pub written: usize,
    pub skipped: usize,
    pub failed: usize,
}

/// Runs `plan` into the results CSV at `out`, flushing after every chunk of
/// trials. With `resume`, rows already in `out` are kept and their
/// (grid point, trial, method) keys are not rerun; otherwise `out` is
/// replaced.
pub fn run_plan_to_file(plan: &ExperimentPlan, out: &Path, resume: bool) -> Result<SweepSummary> {
    plan.validate()?;
    let mut done: HashSet<RowKey> = HashSet::new();
    let mut summary = SweepSummary::default();

    let existing = if resume && out.exists() {
        let mut bytes = std::fs::read(out)?;
        // Drop a record cut short by an interrupted write.
        match bytes.iter().rposition(|&b| b == b'\n') {
            Some(p) => bytes.truncate(p + 1),
            None => bytes.clear(),
        }
        if bytes.is_empty() {
            None
        } else {
            let table = read_results_from(&bytes[..], out, true)?;
            if table.k_values != plan.k_values {
                return Err(crate::error::Error::Plan(format!(
                    "{} was written with k values {:?}, plan asks for {:?}",
                    out.display(),
                    table.k_values,
                    plan.k_values
                )));
            }
            Some(table.rows)
        }
    } else {
        None
    };

    let file = match &existing {
        Some(rows) => {
            for r in rows {
                done.insert(r.key());
            }
            summary.skipped = rows.len();
            // Rewrite the kept rows so a truncated tail never survives.
            let mut w = ResultWriter::new(BufWriter::new(std::fs::File::create(out)?), &plan.k_values, true)?;
            for r in rows {
                w.write(r)?;
            }
            w.flush()?;
            drop(w);
            OpenOptions::new().append(true).open(out)?
        }
        None => {
            let mut f = std::fs::File::create(out)?;
            let mut w = ResultWriter::new(&mut f, &plan.k_values, true)?;
            w.flush()?;
            drop(w);
            f
        }
    };
    let mut writer = ResultWriter::new(BufWriter::new(file), &plan.k_values, false)?;

    let work: Vec<(TrialPoint, Vec<PredictorKind>)> = trial_points(plan)
        .into_iter()
        .filter_map(|p| {
            let todo: Vec<PredictorKind> = plan
                .methods
                .iter()
                .copied()
                .filter(|&m| !done.contains(&key_of(plan, &p, m)))
                .collect();
            (!todo.is_empty()).then_some((p, todo))
        })
        .collect();

    let chunk = rayon::current_num_threads().max(1);
    for batch in work.chunks(chunk) {
        let rows: Vec<Vec<ResultRow>> = batch.par_iter().map(|(p, ms)| run_trial(plan, p, ms)).collect();
        for r in rows.iter().flatten() {
            writer.write(r)?;
            summary.written += 1;
            if !r.is_ok() {
                summary.failed += 1;
            }
        }
        writer.flush()?;
    }
    writer.flush()?;
    writer.into_inner()?.flush()?;
    Ok(summary)
}

fn key_of(plan: &ExperimentPlan, p: &TrialPoint, method: PredictorKind) -> RowKey {
    ResultRow {
        plan: plan.name.clone(),
        similarity: p.similarity,
        num_tasks: p.size.tasks,
        num_workers: p.size.workers,
        density: p.density,
        method,
        trial: p.trial,
        seed: p.seed,
        rmse: None,
        ma_k: Vec::new(),
        fallback_fraction: None,
        status: String::new(),
        duration_ms: 0.0,
    }
    .key()
}

/// Writes rows to any sink with a header; used by tests and the CLI.
pub fn write_rows<W: Write>(out: W, k_values: &[usize], rows: &[ResultRow]) -> Result<()> {
    let mut w = ResultWriter::new(out, k_values, true)?;
    for r in rows {
        w.write(r)?;
    }
    w.flush()
}
