//! File formats and experiment runs: plans, matrix and results CSV,
//! sweeps, aggregation and evaluation of matrices read from disk.

pub mod aggregate;
pub mod matrix_csv;
pub mod plan;
pub mod real;
pub mod results;
pub mod sweep;

pub use aggregate::{aggregate, emit_plot_data, write_plot_data, AggregateRow, Axis, Summary};
pub use matrix_csv::{export_matrix_csv, ingest_matrix_csv, ingest_matrix_reader, write_matrix_csv, IngestedMatrix};
pub use plan::{ExperimentPlan, PlanSimilarity, Size};
pub use real::{evaluate_ingested, evaluate_real, write_report_csv, RealEvalOptions, RealEvaluation};
pub use results::{format_g6, read_results, ResultRow, ResultTable, ResultWriter};
pub use sweep::{run_plan, run_plan_to_file, run_trial, trial_points, trial_seed, SweepSummary, TrialPoint};
