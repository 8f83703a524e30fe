use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use taskroute::harness::{
    self, evaluate_real, run_plan_to_file, write_matrix_csv, write_report_csv, Axis, ExperimentPlan,
    RealEvalOptions,
};
use taskroute::{
    cross_validate_pmf, fit, generate, pmf_objective, Error, GeneratorConfig, PmfConfig,
    PredictorKind, PredictorSettings, Result, SpammerMode,
};

#[derive(Parser)]
#[command(name = "taskroute", version, about = "Predict crowd worker accuracy and run routing experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic crowd and write it as matrix CSV.
    Generate(GenerateArgs),
    /// Fit one method on a matrix CSV and summarize the model.
    Train(TrainArgs),
    /// Round-robin evaluation of a matrix CSV.
    Evaluate(EvaluateArgs),
    /// Run an experiment plan into a results CSV.
    Sweep(SweepArgs),
    /// Mean and standard deviation of a results CSV per grid point and method.
    Aggregate(AggregateArgs),
}

#[derive(Args)]
struct GenerateArgs {
    /// Target correlation between task columns.
    #[arg(long)]
    similarity: f64,
    #[arg(long)]
    workers: usize,
    #[arg(long)]
    tasks: usize,
    #[arg(long, default_value_t = 0.5)]
    mean: f64,
    #[arg(long, default_value_t = 0.15)]
    stddev: f64,
    /// Replace a share of low-accuracy cells with spammer draws.
    #[arg(long)]
    spammers: bool,
    #[arg(long, default_value = "per_task")]
    spammer_mode: SpammerMode,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output path; stdout when omitted.
    #[arg(long, short)]
    output: Option<PathBuf>,
    /// Also write the pre-spammer matrix here.
    #[arg(long)]
    idealized: Option<PathBuf>,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long, short)]
    input: PathBuf,
    #[arg(long, default_value = "pmf")]
    method: PredictorKind,
    /// Latent dimensionality for PMF and rank for SVD; tasks - 1 by default.
    #[arg(long)]
    dimensionality: Option<usize>,
    #[arg(long)]
    lambda_w: Option<f64>,
    #[arg(long)]
    lambda_t: Option<f64>,
    #[arg(long)]
    learning_rate: Option<f64>,
    #[arg(long)]
    max_epochs: Option<usize>,
    /// Fit PMF on raw accuracies instead of deviations from their mean.
    #[arg(long)]
    no_center: bool,
    /// Pick PMF lambdas by cross-validation over this grid (comma separated).
    #[arg(long, value_delimiter = ',')]
    cv_grid: Vec<f64>,
    #[arg(long, default_value_t = 5)]
    folds: usize,
    /// Share of observed cells used for cross-validation.
    #[arg(long, default_value_t = 0.2)]
    cv_fraction: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Write a prediction for every cell here.
    #[arg(long)]
    predictions: Option<PathBuf>,
}

#[derive(Args)]
struct EvaluateArgs {
    #[arg(long, short)]
    input: PathBuf,
    /// Comma-separated methods; all by default.
    #[arg(long, value_delimiter = ',')]
    methods: Vec<PredictorKind>,
    #[arg(long = "k", value_delimiter = ',', default_value = "10")]
    k_values: Vec<usize>,
    /// Drop rows whose num_examples is below this.
    #[arg(long, default_value_t = 0)]
    min_examples: u64,
    #[arg(long, default_value_t = 0.2)]
    train_fraction: f64,
    /// Keep at least one training cell for every worker.
    #[arg(long)]
    row_coverage: bool,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output path; stdout when omitted.
    #[arg(long, short)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    #[arg(long, short)]
    plan: PathBuf,
    #[arg(long, short)]
    output: PathBuf,
    /// Keep rows already in the output and run only the missing ones.
    #[arg(long)]
    resume: bool,
}

#[derive(Args)]
struct AggregateArgs {
    #[arg(long, short)]
    input: PathBuf,
    #[arg(long, short)]
    output: PathBuf,
    /// Comma-separated grouping axes; all five by default.
    #[arg(long, value_delimiter = ',')]
    group_by: Vec<Axis>,
}

fn sink(path: &Option<PathBuf>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(io::stdout().lock()),
    })
}

fn cmd_generate(a: GenerateArgs) -> Result<()> {
    let mut cfg = GeneratorConfig::new(a.similarity, a.workers, a.tasks)
        .with_seed(a.seed)
        .with_spammers(a.spammers)
        .with_spammer_mode(a.spammer_mode);
    cfg.mean_accuracy = a.mean;
    cfg.accuracy_stddev = a.stddev;
    let crowd = generate(&cfg)?;
    let wids = harness::matrix_csv::default_ids("w", a.workers);
    let tids = harness::matrix_csv::default_ids("t", a.tasks);
    write_matrix_csv(sink(&a.output)?, &crowd.matrix, &wids, &tids)?;
    if let Some(p) = &a.idealized {
        write_matrix_csv(BufWriter::new(File::create(p)?), &crowd.idealized_matrix, &wids, &tids)?;
    }
    let spammers = crowd.spammer_flags.iter().filter(|&&f| f).count();
    eprintln!(
        "generated {} workers x {} tasks, {spammers} workers with spammer cells",
        a.workers, a.tasks
    );
    Ok(())
}

fn cmd_train(a: TrainArgs) -> Result<()> {
    let data = harness::ingest_matrix_csv(&a.input, 0)?;
    let m = &data.matrix;
    let mut settings = PredictorSettings::for_tasks(m.num_tasks());
    if let Some(d) = a.dimensionality {
        settings.pmf.dimensionality = d;
        settings.svd_rank = d;
    }
    let p = &mut settings.pmf;
    if let Some(v) = a.lambda_w {
        p.lambda_w = v;
    }
    if let Some(v) = a.lambda_t {
        p.lambda_t = v;
    }
    if let Some(v) = a.learning_rate {
        p.learning_rate = v;
    }
    if let Some(v) = a.max_epochs {
        p.max_epochs = v;
    }
    p.center = !a.no_center;
    p.seed = a.seed;

    if a.method == PredictorKind::Pmf && !a.cv_grid.is_empty() {
        let cv = cross_validate_pmf(m, &a.cv_grid, a.folds, a.cv_fraction, &settings.pmf, a.seed)?;
        for (lw, lt, score) in &cv.table {
            println!("cv lambda_w={lw} lambda_t={lt} rmse={score:.6}");
        }
        settings.pmf = cv.best;
        println!(
            "cv selected lambda_w={} lambda_t={}",
            settings.pmf.lambda_w, settings.pmf.lambda_t
        );
    }

    let mask = m.mask().clone();
    let fitted = fit(a.method, m, &mask, &settings, a.seed)?;
    println!(
        "method {} on {} workers x {} tasks, {} observed cells",
        a.method,
        m.num_workers(),
        m.num_tasks(),
        m.observed_count()
    );
    if let taskroute::FittedPredictor::Pmf(model) = &fitted {
        let cfg: &PmfConfig<f64> = &settings.pmf;
        println!(
            "epochs {} objective {:.6} -> {:.6} (dimensionality {}, lambda_w {}, lambda_t {}, offset {:.6})",
            model.epochs(),
            model.objective_trace.first().copied().unwrap_or(f64::NAN),
            pmf_objective(model, m, &mask, cfg)?,
            cfg.dimensionality,
            cfg.lambda_w,
            cfg.lambda_t,
            model.offset
        );
    }
    let (mut sse, mut n) = (0.0, 0usize);
    for (i, j, r) in m.observed_cells() {
        let e = fitted.predict(i, j).value - r;
        sse += e * e;
        n += 1;
    }
    println!("training rmse {:.6}", (sse / n as f64).sqrt());

    if let Some(path) = &a.predictions {
        let mut w = csv::Writer::from_writer(BufWriter::new(File::create(path)?));
        w.write_record(["worker_id", "task_id", "prediction", "observed"])?;
        for i in 0..m.num_workers() {
            for j in 0..m.num_tasks() {
                let est = fitted.predict(i, j);
                w.write_record([
                    data.worker_ids[i].as_str(),
                    data.task_ids[j].as_str(),
                    &est.value.to_string(),
                    if m.is_observed(i, j) { "1" } else { "0" },
                ])?;
            }
        }
        w.flush()?;
    }
    Ok(())
}

fn cmd_evaluate(a: EvaluateArgs) -> Result<()> {
    let methods = if a.methods.is_empty() {
        PredictorKind::ALL.to_vec()
    } else {
        a.methods
    };
    let mut opts = RealEvalOptions::new(methods, a.k_values.clone());
    opts.min_examples = a.min_examples;
    opts.train_fraction = a.train_fraction;
    opts.row_coverage = a.row_coverage;
    opts.seed = a.seed;
    let eval = evaluate_real(&a.input, &opts)?;
    write_report_csv(sink(&a.output)?, &eval, &a.k_values)?;
    Ok(())
}

fn cmd_sweep(a: SweepArgs) -> Result<()> {
    let plan = ExperimentPlan::load(&a.plan)?;
    let s = run_plan_to_file(&plan, &a.output, a.resume)?;
    eprintln!(
        "{}: wrote {} rows ({} failed), kept {} existing",
        plan.name, s.written, s.failed, s.skipped
    );
    Ok(())
}

fn cmd_aggregate(a: AggregateArgs) -> Result<()> {
    let axes = if a.group_by.is_empty() {
        Axis::ALL.to_vec()
    } else {
        a.group_by
    };
    let n = harness::emit_plot_data(&a.input, &axes, &a.output)?;
    eprintln!("wrote {n} aggregated rows to {}", a.output.display());
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let outcome = match cli.command {
        Command::Generate(a) => cmd_generate(a),
        Command::Train(a) => cmd_train(a),
        Command::Evaluate(a) => cmd_evaluate(a),
        Command::Sweep(a) => cmd_sweep(a),
        Command::Aggregate(a) => cmd_aggregate(a),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn exit_code(e: &Error) -> u8 {
    e.exit_code() as u8
}
