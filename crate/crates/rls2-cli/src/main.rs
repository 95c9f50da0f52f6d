//! Command line interface for RLS2: train models, compute warm-started
//! regularization paths, cross-validate the regularization parameter,
//! predict on new data, and reproduce the synthetic binary-strings
//! experiment.

// `!(x > 0)` rejects NaN along with nonpositive values; keep it.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::fs;
use std::fs::File;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};

use rls2::{
    accuracy, align_features, build_bank, cv_curve, default_benchmark_specs, fit, fit_path, kfold,
    linear_feature_specs, load_csv, load_csv_raw, load_payload, log_lambda_grid, ova_fit,
    ova_predict_ids, read_spec_file, rmse, save_model, save_ova, select_lambda, split_indices,
    standardize, stratified_kfold, write_indices, BasisKernelSpec, BinaryStringsConfig, CsvOptions,
    CvSettings, Dataset, FitOptions, LambdaSelection, ModelPayload, OvaSettings, Result, Rls2Error,
    ScalingKind, ScalingRule, SelectionRule, Standardizer, Task, TrainedModel,
};

#[derive(Parser)]
#[command(
    name = "rls2",
    version,
    about = "Multiple kernel learning with regularized least squares over two layers"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train one model at a fixed lambda (or cross-validate a grid first)
    Train(TrainArgs),
    /// Warm-started regularization path with per-lambda diagnostics
    Path(PathArgs),
    /// k-fold validation curve over a lambda grid
    Cv(CvArgs),
    /// Predict with a saved model
    Predict(PredictArgs),
    /// Synthetic binary-strings experiment
    Synth(SynthArgs),
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum TaskArg {
    Reg,
    Class,
    Multiclass,
}

impl From<TaskArg> for Task {
    fn from(t: TaskArg) -> Task {
        match t {
            TaskArg::Reg => Task::Regression,
            TaskArg::Class => Task::Binary,
            TaskArg::Multiclass => Task::Multiclass,
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ScalingArg {
    Unit,
    Trace,
    TraceCentered,
    FeatureNorm,
    Fisher,
    FisherNl,
    FisherSqrt,
}

impl From<ScalingArg> for ScalingKind {
    fn from(s: ScalingArg) -> ScalingKind {
        match s {
            ScalingArg::Unit => ScalingKind::Unit,
            ScalingArg::Trace => ScalingKind::TraceInverse,
            ScalingArg::TraceCentered => ScalingKind::TraceInverseCentered,
            ScalingArg::FeatureNorm => ScalingKind::FeatureNormInverse,
            ScalingArg::Fisher => ScalingKind::Fisher,
            ScalingArg::FisherNl => ScalingKind::FisherNonlinear,
            ScalingArg::FisherSqrt => ScalingKind::FisherSqrt,
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum RuleArg {
    Best,
    OneSe,
}

impl From<RuleArg> for SelectionRule {
    fn from(r: RuleArg) -> SelectionRule {
        match r {
            RuleArg::Best => SelectionRule::Best,
            RuleArg::OneSe => SelectionRule::OneStdError,
        }
    }
}

#[derive(Args)]
struct DataOpts {
    /// Input CSV file
    #[arg(long)]
    data: PathBuf,
    /// Target column (by name, or c1..cN for headerless files)
    #[arg(long)]
    target: String,
    #[arg(long, value_enum, default_value_t = TaskArg::Reg)]
    task: TaskArg,
    /// Field delimiter
    #[arg(long, default_value_t = ',')]
    delimiter: char,
    /// Read the file without a header row
    #[arg(long)]
    no_header: bool,
}

impl DataOpts {
    fn csv_options(&self) -> CsvOptions {
        csv_options_for(self.delimiter, self.no_header)
    }

    fn load(&self) -> Result<Dataset> {
        if !self.delimiter.is_ascii() {
            return Err(Rls2Error::Config(format!(
                "delimiter '{}' is not a single-byte character",
                self.delimiter
            )));
        }
        load_csv(
            &self.data,
            &self.target,
            self.task.into(),
            &self.csv_options(),
        )
    }
}

fn csv_options_for(delimiter: char, no_header: bool) -> CsvOptions {
    CsvOptions {
        delimiter: delimiter as u8,
        has_header: !no_header,
    }
}

#[derive(Args)]
struct KernelOpts {
    /// `default` for the benchmark grid, `linear` for one linear kernel per
    /// feature, or a kernel spec file path
    #[arg(long, default_value = "default")]
    kernels: String,
    #[arg(long, value_enum, default_value_t = ScalingArg::Trace)]
    scaling: ScalingArg,
    /// Extend trace scalings over held-out inputs (needs --test-data,
    /// --holdout, or cross-validation folds)
    #[arg(long)]
    transductive: bool,
    /// Standardize features on the training set
    #[arg(long)]
    standardize: bool,
    /// Skip the output-mean intercept (regression)
    #[arg(long)]
    no_intercept: bool,
}

impl KernelOpts {
    fn rule(&self) -> ScalingRule {
        ScalingRule {
            kind: self.scaling.into(),
            transductive: self.transductive,
        }
    }

    fn specs(&self, n_features: usize) -> Result<Vec<BasisKernelSpec>> {
        match self.kernels.as_str() {
            "default" => Ok(default_benchmark_specs(n_features)),
            "linear" => Ok(linear_feature_specs(n_features)),
            path => read_spec_file(path),
        }
    }
}

#[derive(Args)]
struct SolverOpts {
    /// Normalized residual tolerance of the linear solver / stopping test
    #[arg(long, default_value_t = 1e-2)]
    delta: f64,
    /// Seed for splits and folds
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

impl SolverOpts {
    fn fit_options(&self) -> FitOptions {
        FitOptions::default().with_delta(self.delta)
    }
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    data: DataOpts,
    #[command(flatten)]
    kernels: KernelOpts,
    #[command(flatten)]
    solver: SolverOpts,
    /// Fixed regularization parameter
    #[arg(long, conflicts_with = "lambda_grid")]
    lambda: Option<f64>,
    /// lo:hi:n lambda grid; cross-validates before the final fit
    #[arg(long)]
    lambda_grid: Option<String>,
    #[arg(long, default_value_t = 10)]
    folds: usize,
    /// Stratify cross-validation folds by class
    #[arg(long)]
    stratified: bool,
    #[arg(long, value_enum, default_value_t = RuleArg::OneSe)]
    rule: RuleArg,
    /// Pick one shared lambda for a one-vs-all ensemble
    #[arg(long)]
    shared_lambda: bool,
    /// Extra inputs (CSV) for transductive scaling
    #[arg(long)]
    test_data: Option<PathBuf>,
    /// Output model file
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct PathArgs {
    #[command(flatten)]
    data: DataOpts,
    #[command(flatten)]
    kernels: KernelOpts,
    #[command(flatten)]
    solver: SolverOpts,
    /// lo:hi:n lambda grid
    #[arg(long, default_value = "1e-6:1e6:30")]
    lambda_grid: String,
    /// Hold out this fraction as a test set and score every lambda on it
    #[arg(long)]
    holdout: Option<f64>,
    /// Write train/test index files into this directory
    #[arg(long)]
    emit_indices: Option<PathBuf>,
    /// Save one model file per lambda into this directory
    #[arg(long)]
    models_dir: Option<PathBuf>,
    /// Extra inputs (CSV) for transductive scaling
    #[arg(long)]
    test_data: Option<PathBuf>,
    /// Coefficient-profile CSV (lambda, df, weights; linear kernels only)
    #[arg(long)]
    coef_profile: Option<PathBuf>,
    /// Output CSV with per-lambda diagnostics
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct CvArgs {
    #[command(flatten)]
    data: DataOpts,
    #[command(flatten)]
    kernels: KernelOpts,
    #[command(flatten)]
    solver: SolverOpts,
    /// lo:hi:n lambda grid
    #[arg(long, default_value = "1e-6:1e6:30")]
    lambda_grid: String,
    #[arg(long, default_value_t = 10)]
    folds: usize,
    /// Stratify folds by class
    #[arg(long)]
    stratified: bool,
    #[arg(long, value_enum, default_value_t = RuleArg::OneSe)]
    rule: RuleArg,
    /// Write fold index files into this directory
    #[arg(long)]
    emit_folds: Option<PathBuf>,
    /// Refit at the selected lambda and save the model here
    #[arg(long)]
    model_out: Option<PathBuf>,
    /// Output CSV with the validation curve
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct PredictArgs {
    /// Saved model file
    #[arg(long)]
    model: PathBuf,
    /// Input CSV; features are matched to the model by column name
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value_t = ',')]
    delimiter: char,
    #[arg(long)]
    no_header: bool,
    /// Output CSV with id, prediction and (for classification) label
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Training prefix size (at most 150; the last 100 strings are test)
    #[arg(long, default_value_t = 150)]
    n_train: usize,
    /// Noise standard deviation
    #[arg(long, default_value_t = 0.01)]
    sigma: f64,
    /// lo:hi:n lambda grid (defaults to the benchmark grid)
    #[arg(long)]
    lambda_grid: Option<String>,
    #[arg(long, default_value_t = 1e-2)]
    delta: f64,
    /// Per-lambda report CSV
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Train(args) => cmd_train(args),
        Command::Path(args) => cmd_path(args),
        Command::Cv(args) => cmd_cv(args),
        Command::Predict(args) => cmd_predict(args),
        Command::Synth(args) => cmd_synth(args),
    };
    if let Err(e) = outcome {
        eprintln!("error: {e}");
        std::process::exit(1);
    }
}

/// Parse "lo:hi:n" into a descending log-spaced grid.
fn parse_grid(text: &str) -> Result<Vec<f64>> {
    let parts: Vec<&str> = text.split(':').collect();
    let bad = || Rls2Error::Config(format!("bad lambda grid '{text}'; expected lo:hi:n"));
    if parts.len() != 3 {
        return Err(bad());
    }
    let lo: f64 = parts[0].parse().map_err(|_| bad())?;
    let hi: f64 = parts[1].parse().map_err(|_| bad())?;
    let n: usize = parts[2].parse().map_err(|_| bad())?;
    if !(lo > 0.0) || !(hi >= lo) || n == 0 {
        return Err(bad());
    }
    if n == 1 || hi == lo {
        return Ok(vec![hi]);
    }
    Ok(log_lambda_grid(lo, hi, n))
}

/// Intercept and standardization handling: returns the fitting dataset
/// (targets centered when an intercept is used), the intercept, and the
/// standardizer when feature standardization is on.
fn prepare_training(
    ds: &Dataset,
    kernels: &KernelOpts,
) -> Result<(Dataset, f64, Option<Standardizer>)> {
    if kernels.standardize {
        let (st, mut train_t, _) = standardize(ds, &[])?;
        let mut intercept = st.output_intercept;
        if kernels.no_intercept && ds.task == Task::Regression {
            train_t.y = ds.y.clone();
            intercept = 0.0;
        }
        Ok((train_t, intercept, Some(st)))
    } else if ds.task == Task::Regression && !kernels.no_intercept {
        let mut train_t = ds.clone();
        let intercept = ds.y.sum() / ds.n_examples() as f64;
        train_t.y -= intercept;
        Ok((train_t, intercept, None))
    } else {
        Ok((ds.clone(), 0.0, None))
    }
}

fn load_aligned_features(
    path: &Path,
    options: &CsvOptions,
    feature_names: &[String],
) -> Result<(Vec<usize>, ndarray::Array2<f64>)> {
    let table = load_csv_raw(path, options)?;
    let x = align_features(&table, feature_names)?;
    Ok((table.row_ids, x))
}

fn cmd_train(args: TrainArgs) -> Result<()> {
    let ds = args.data.load()?;
    let specs = args.kernels.specs(ds.n_features())?;
    let rule = args.kernels.rule();
    let fit_opts = args.solver.fit_options();

    if ds.task == Task::Multiclass {
        let lambda = match (&args.lambda, &args.lambda_grid) {
            (Some(l), _) => LambdaSelection::Fixed(*l),
            (None, Some(grid)) => LambdaSelection::CrossValidated {
                grid: parse_grid(grid)?,
                folds: args.folds,
                seed: args.solver.seed,
                rule: args.rule.into(),
                shared: args.shared_lambda,
            },
            (None, None) => {
                return Err(Rls2Error::Config(
                    "train needs --lambda or --lambda-grid".into(),
                ))
            }
        };
        let test_x = match &args.test_data {
            Some(path) => {
                let (_, raw) =
                    load_aligned_features(path, &args.data.csv_options(), &ds.feature_names)?;
                Some(raw)
            }
            None => None,
        };
        let settings = OvaSettings {
            specs,
            scaling: rule,
            lambda,
            fit: fit_opts,
            standardize: args.kernels.standardize,
            test_x,
        };
        let start = Instant::now();
        let model = ova_fit(&ds, &settings)?;
        save_ova(&model, &args.out)?;
        for (label, m) in model.class_labels.iter().zip(model.models.iter()) {
            println!(
                "class={label} lambda={} n_kernels={}",
                m.lambda,
                m.d.support().len()
            );
        }
        println!(
            "classes={} wall_seconds={}",
            model.class_labels.len(),
            start.elapsed().as_secs_f64()
        );
        return Ok(());
    }

    let lambda = match (&args.lambda, &args.lambda_grid) {
        (Some(l), _) => *l,
        (None, Some(grid_text)) => {
            let grid = parse_grid(grid_text)?;
            let curve = cv_curve(
                &ds,
                &CvSettings {
                    specs: specs.clone(),
                    scaling: rule,
                    grid: grid.clone(),
                    folds: args.folds,
                    seed: args.solver.seed,
                    fit: fit_opts.clone(),
                    standardize: args.kernels.standardize,
                    intercept: !args.kernels.no_intercept,
                    stratified: args.stratified,
                },
            )?;
            let idx = select_lambda(&curve, args.rule.into());
            let chosen = grid[idx];
            println!("selected_lambda={chosen}");
            chosen
        }
        (None, None) => {
            return Err(Rls2Error::Config(
                "train needs --lambda or --lambda-grid".into(),
            ))
        }
    };

    let (train_t, intercept, standardizer) = prepare_training(&ds, &args.kernels)?;
    let test_x = match &args.test_data {
        Some(path) => {
            let (_, raw) =
                load_aligned_features(path, &args.data.csv_options(), &ds.feature_names)?;
            Some(match &standardizer {
                Some(st) => st.transform_x(&raw)?,
                None => raw,
            })
        }
        None => None,
    };
    let start = Instant::now();
    let bank = build_bank(&train_t, &specs, &rule, test_x.as_ref())?;
    let fit_result = fit(&bank, &train_t.y, lambda, None, &fit_opts)?;
    let model = TrainedModel::from_fit(
        &bank,
        &fit_result,
        intercept,
        ds.task,
        ds.feature_names.clone(),
        standardizer,
    )
    .with_class_labels(ds.class_labels.clone());
    save_model(&model, &args.out)?;
    println!(
        "objective={} n_kernels={} outer_iterations={} converged={} wall_seconds={}",
        fit_result.objective,
        fit_result.active_set.len(),
        fit_result.outer_iterations,
        fit_result.converged,
        start.elapsed().as_secs_f64()
    );
    Ok(())
}

fn cmd_path(args: PathArgs) -> Result<()> {
    let ds = args.data.load()?;
    if ds.task == Task::Multiclass {
        return Err(Rls2Error::Config(
            "path supports regression and binary tasks; train one-vs-all ensembles with `train --lambda-grid`".into(),
        ));
    }
    let specs = args.kernels.specs(ds.n_features())?;
    let rule = args.kernels.rule();
    let fit_opts = args.solver.fit_options();
    let grid = parse_grid(&args.lambda_grid)?;

    let (fit_ds, holdout_ds) = match args.holdout {
        Some(fraction) => {
            if !(fraction > 0.0 && fraction < 1.0) {
                return Err(Rls2Error::BadFraction(fraction));
            }
            let (train_idx, test_idx) =
                split_indices(ds.n_examples(), 1.0 - fraction, args.solver.seed)?;
            if let Some(dir) = &args.emit_indices {
                fs::create_dir_all(dir)?;
                write_indices(File::create(dir.join("train.idx"))?, &train_idx)?;
                write_indices(File::create(dir.join("test.idx"))?, &test_idx)?;
            }
            (ds.subset(&train_idx), Some(ds.subset(&test_idx)))
        }
        None => (ds.clone(), None),
    };

    let (train_t, intercept, standardizer) = prepare_training(&fit_ds, &args.kernels)?;
    let holdout_x = match (&holdout_ds, &standardizer) {
        (Some(h), Some(st)) => Some(st.transform_x(&h.x)?),
        (Some(h), None) => Some(h.x.clone()),
        (None, _) => None,
    };
    let extra_test_x = match &args.test_data {
        Some(path) => {
            let (_, raw) =
                load_aligned_features(path, &args.data.csv_options(), &ds.feature_names)?;
            Some(match &standardizer {
                Some(st) => st.transform_x(&raw)?,
                None => raw,
            })
        }
        None => None,
    };
    let transductive_x = extra_test_x.as_ref().or(holdout_x.as_ref());

    let bank = build_bank(&train_t, &specs, &rule, transductive_x)?;
    let path = fit_path(&bank, &train_t.y, &grid, &fit_opts)?;

    let mut out = String::new();
    let score_header = match (holdout_ds.is_some(), ds.task) {
        (true, Task::Regression) => ",test_rmse",
        (true, _) => ",test_accuracy",
        (false, _) => "",
    };
    out.push_str(&format!(
        "lambda,objective,n_kernels,outer_iterations,wall_seconds{score_header}\n"
    ));
    for (i, diag) in path.diagnostics.iter().enumerate() {
        out.push_str(&format!(
            "{},{},{},{},{}",
            diag.lambda, diag.objective, diag.n_kernels, diag.outer_iterations, diag.wall_seconds
        ));
        if let (Some(h), Some(hx)) = (&holdout_ds, &holdout_x) {
            let f = &path.fits[i];
            let preds = rls2::predict_with_bank(&bank, &f.c, &f.d, intercept, hx)?;
            let score = match ds.task {
                Task::Regression => rmse(&h.y, &preds)?,
                _ => {
                    let signs = preds.mapv(|v| if v >= 0.0 { 1.0 } else { -1.0 });
                    accuracy(&h.y, &signs)?
                }
            };
            out.push_str(&format!(",{score}"));
        }
        out.push('\n');
    }
    fs::write(&args.out, out)?;

    if let Some(profile_out) = &args.coef_profile {
        let mut buf = Vec::new();
        rls2::write_coefficient_profile(&mut buf, &path, &bank, intercept)?;
        fs::write(profile_out, buf)?;
    }

    if let Some(dir) = &args.models_dir {
        fs::create_dir_all(dir)?;
        for (i, f) in path.fits.iter().enumerate() {
            let model = TrainedModel::from_fit(
                &bank,
                f,
                intercept,
                ds.task,
                ds.feature_names.clone(),
                standardizer.clone(),
            )
            .with_class_labels(ds.class_labels.clone());
            save_model(&model, dir.join(format!("model_{i:03}.json")))?;
        }
    }
    println!("path_rows={}", path.diagnostics.len());
    Ok(())
}

fn cmd_cv(args: CvArgs) -> Result<()> {
    let ds = args.data.load()?;
    let specs = args.kernels.specs(ds.n_features())?;
    let rule = args.kernels.rule();
    let fit_opts = args.solver.fit_options();
    let grid = parse_grid(&args.lambda_grid)?;

    if let Some(dir) = &args.emit_folds {
        let folds = if args.stratified || ds.task != Task::Regression {
            stratified_kfold(&ds, args.folds, args.solver.seed)?
        } else {
            kfold(ds.n_examples(), args.folds, args.solver.seed)?
        };
        fs::create_dir_all(dir)?;
        for (i, (train_idx, val_idx)) in folds.iter().enumerate() {
            write_indices(
                File::create(dir.join(format!("fold_{i}_train.idx")))?,
                train_idx,
            )?;
            write_indices(
                File::create(dir.join(format!("fold_{i}_val.idx")))?,
                val_idx,
            )?;
        }
    }

    let curve = if ds.task == Task::Multiclass {
        let settings = OvaSettings {
            specs: specs.clone(),
            scaling: rule,
            lambda: LambdaSelection::Fixed(1.0), // placeholder, unused by the curve
            fit: fit_opts.clone(),
            standardize: args.kernels.standardize,
            test_x: None,
        };
        rls2::ova_cv_curve(&ds, &settings, &grid, args.folds, args.solver.seed)?
    } else {
        cv_curve(
            &ds,
            &CvSettings {
                specs: specs.clone(),
                scaling: rule,
                grid: grid.clone(),
                folds: args.folds,
                seed: args.solver.seed,
                fit: fit_opts.clone(),
                standardize: args.kernels.standardize,
                intercept: !args.kernels.no_intercept,
                stratified: args.stratified,
            },
        )?
    };

    let mut buf = Vec::new();
    curve.write_csv(&mut buf)?;
    fs::write(&args.out, buf)?;

    let idx = select_lambda(&curve, args.rule.into());
    let chosen = grid[idx];
    println!("selected_lambda={chosen}");

    if let Some(model_out) = &args.model_out {
        if ds.task == Task::Multiclass {
            let settings = OvaSettings {
                specs,
                scaling: rule,
                lambda: LambdaSelection::Fixed(chosen),
                fit: fit_opts,
                standardize: args.kernels.standardize,
                test_x: None,
            };
            save_ova(&ova_fit(&ds, &settings)?, model_out)?;
        } else {
            let (train_t, intercept, standardizer) = prepare_training(&ds, &args.kernels)?;
            let bank = build_bank(&train_t, &specs, &rule, None)?;
            let fit_result = fit(&bank, &train_t.y, chosen, None, &fit_opts)?;
            let model = TrainedModel::from_fit(
                &bank,
                &fit_result,
                intercept,
                ds.task,
                ds.feature_names.clone(),
                standardizer,
            )
            .with_class_labels(ds.class_labels.clone());
            save_model(&model, model_out)?;
        }
    }
    Ok(())
}

fn cmd_predict(args: PredictArgs) -> Result<()> {
    if !args.delimiter.is_ascii() {
        return Err(Rls2Error::Config(format!(
            "delimiter '{}' is not a single-byte character",
            args.delimiter
        )));
    }
    let options = csv_options_for(args.delimiter, args.no_header);
    let payload = load_payload(&args.model)?;
    let mut out = String::new();
    match payload {
        ModelPayload::Single(model) => {
            let (ids, x) = load_aligned_features(&args.data, &options, &model.feature_names)?;
            let preds = model.predict(&x)?;
            match model.task {
                Task::Binary => {
                    out.push_str("id,prediction,label\n");
                    for (row, id) in ids.iter().enumerate() {
                        let positive = preds[row] >= 0.0;
                        let label = match &model.class_labels {
                            Some(labels) => labels[usize::from(positive)].clone(),
                            None => if positive { "1" } else { "-1" }.to_string(),
                        };
                        out.push_str(&format!("{id},{},{label}\n", preds[row]));
                    }
                }
                _ => {
                    out.push_str("id,prediction\n");
                    for (row, id) in ids.iter().enumerate() {
                        out.push_str(&format!("{id},{}\n", preds[row]));
                    }
                }
            }
        }
        ModelPayload::Ova(model) => {
            let names = &model.models[0].feature_names;
            let (ids, x) = load_aligned_features(&args.data, &options, names)?;
            let class_ids = ova_predict_ids(&model, &x)?;
            let mut confidences = Vec::with_capacity(model.models.len());
            for m in &model.models {
                confidences.push(m.predict(&x)?);
            }
            out.push_str("id,prediction,label\n");
            for (row, id) in ids.iter().enumerate() {
                let c = class_ids[row];
                out.push_str(&format!(
                    "{id},{},{}\n",
                    confidences[c][row], model.class_labels[c]
                ));
            }
        }
    }
    fs::write(&args.out, out)?;
    Ok(())
}

fn cmd_synth(args: SynthArgs) -> Result<()> {
    let lambdas = match &args.lambda_grid {
        Some(text) => parse_grid(text)?,
        None => Vec::new(),
    };
    let config = BinaryStringsConfig {
        seed: args.seed,
        n_train: args.n_train,
        sigma: args.sigma,
        lambdas,
        fit: FitOptions::default().with_delta(args.delta),
    };
    let start = Instant::now();
    let report = rls2::run_binary_strings(&config)?;
    if let Some(path) = &args.out {
        let mut buf = Vec::new();
        report.write_csv(&mut buf)?;
        fs::write(path, buf)?;
    }
    let best = report.best_row();
    let mut top: Vec<(usize, f64)> = report
        .d_at_best
        .iter()
        .copied()
        .enumerate()
        .filter(|(_, v)| *v > 0.0)
        .collect();
    top.sort_by(|a, b| b.1.total_cmp(&a.1));
    let profile: Vec<String> = top
        .iter()
        .take(5)
        .map(|(j, v)| format!("bit{}={v}", j + 1))
        .collect();
    println!(
        "best_lambda={} test_rmse={} d_true_mass={} d_other_mass={} top_weights=[{}] wall_seconds={}",
        best.lambda,
        best.test_rmse,
        best.d_true_mass,
        best.d_other_mass,
        profile.join(" "),
        start.elapsed().as_secs_f64()
    );
    Ok(())
}
