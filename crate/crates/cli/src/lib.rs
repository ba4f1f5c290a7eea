//! Command-line front end for `dabag`.

pub mod error;
pub mod output;
pub mod simulate;
pub mod table;

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use dabag::eval::knn_k_schedule;
use dabag::rng::Purpose;
use dabag::{
    calibrate, filter_anomalies, predict_pipeline, run_experiment, AnomalyConfig, ClassifierSpec, Method, MethodConfig,
    Metric, ResampleConfig, RngStream,
};

use error::{CliError, CliResult};
use output::{csv_bytes, emit};
use simulate::{aggregate_table, load_config, write_results, Overrides};
use table::{read_table, training_set, Columns, Table};

#[derive(Debug, Parser)]
#[command(name = "dabag", version, about = "Domain adaptive bagging under label shift")]
pub struct Cli {
    /// Master seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads (0 or unset: one per core).
    #[arg(long, global = true, env = "DABAG_THREADS")]
    pub threads: Option<usize>,
    /// More log output on stderr (repeatable).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run a simulation study from a JSON config.
    Simulate(SimulateArgs),
    /// Fit on a training CSV and predict the rows of a test CSV.
    FitPredict(FitPredictArgs),
    /// Score the rows of a test CSV with the distance-to-measure detector.
    Detect(DetectArgs),
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    pub config: PathBuf,
    /// Directory for the result files.
    #[arg(long, default_value = "results")]
    pub out: PathBuf,
    #[arg(long)]
    pub reps: Option<usize>,
    /// Ensemble size for every ensemble method.
    #[arg(long)]
    pub b: Option<usize>,
    /// Use the config's full-scale ensemble size and repetitions.
    #[arg(long)]
    pub full_scale: bool,
    /// Resampler neighbors.
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long)]
    pub eps_stop: Option<f64>,
    #[arg(long)]
    pub t_max: Option<usize>,
    /// Detector level, when the config enables the detector.
    #[arg(long)]
    pub alpha: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Base {
    Knn,
    Logistic,
    Lda,
    Tree,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Mode {
    /// Domain adaptive bagging.
    Da,
    /// Bootstrap bagging.
    Classical,
    /// One base classifier, no ensemble.
    None,
}

#[derive(Debug, Args)]
pub struct DataArgs {
    #[arg(long)]
    pub train: PathBuf,
    #[arg(long)]
    pub test: PathBuf,
    /// Name of the label column.
    #[arg(long)]
    pub label: String,
    /// Columns to drop (comma separated).
    #[arg(long, value_delimiter = ',')]
    pub ignore: Vec<String>,
    /// Output file; stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct FitPredictArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long, value_enum, default_value_t = Base::Tree)]
    pub base: Base,
    #[arg(long, value_enum, default_value_t = Mode::Da)]
    pub mode: Mode,
    #[arg(long, default_value_t = 50)]
    pub b: usize,
    /// Resampler neighbors.
    #[arg(long, default_value_t = 1)]
    pub k: usize,
    /// Neighbors of the kNN base classifier; defaults to round(n^(4/(p+4))).
    #[arg(long)]
    pub knn_k: Option<usize>,
    #[arg(long, default_value_t = 0.01)]
    pub eps_stop: f64,
    #[arg(long, default_value_t = 50)]
    pub t_max: usize,
    /// Standardize features for every distance computation of the ensemble.
    #[arg(long)]
    pub standardize: bool,
    /// Drop detected anomalies before fitting; they are predicted as "anomaly".
    #[arg(long)]
    pub detect_anomalies: bool,
    #[arg(long, default_value_t = 0.1)]
    pub alpha: f64,
    /// Detector neighbors.
    #[arg(long, default_value_t = 5)]
    pub anomaly_k: usize,
}

#[derive(Debug, Args)]
pub struct DetectArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long, default_value_t = 0.1)]
    pub alpha: f64,
    /// Detector neighbors.
    #[arg(long, default_value_t = 5)]
    pub k: usize,
}

/// Parse `args`, run, and return the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    let level = match cli.verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    let _ = env_logger::Builder::new().filter_level(level).parse_env("DABAG_LOG").try_init();
    match run(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn run(cli: &Cli) -> CliResult<()> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cli.threads.unwrap_or(0))
        .build()
        .map_err(|e| CliError::Usage(format!("cannot start {} worker threads: {e}", cli.threads.unwrap_or(0))))?;
    pool.install(|| match &cli.command {
        Command::Simulate(a) => cmd_simulate(a, cli.seed),
        Command::FitPredict(a) => cmd_fit_predict(a, cli.seed.unwrap_or(0)),
        Command::Detect(a) => cmd_detect(a, cli.seed.unwrap_or(0)),
    })
}

fn cmd_simulate(a: &SimulateArgs, seed: Option<u64>) -> CliResult<()> {
    let config = load_config(&a.config)?;
    let o = Overrides {
        seed,
        reps: a.reps,
        b: a.b,
        full_scale: a.full_scale,
        k: a.k,
        eps_stop: a.eps_stop,
        t_max: a.t_max,
        alpha: a.alpha,
    };
    let plan = config.plan(&o)?;
    log::info!("{} scenarios x {} methods x {} reps", plan.scenarios.len(), plan.methods.len(), plan.reps);
    let result = run_experiment(&plan)?;
    let stem = a.config.file_stem().and_then(|s| s.to_str()).unwrap_or("simulation");
    let (csv_path, json_path) = write_results(&a.out, stem, &result)?;
    print_stdout(&aggregate_table(&result.aggregates))?;
    log::info!("wrote {} and {}", csv_path.display(), json_path.display());
    Ok(())
}

/// Training and test tables with matching feature columns.
fn load_pair(d: &DataArgs) -> CliResult<(Table, Table)> {
    let cols = Columns { label: Some(&d.label), ignore: &d.ignore };
    let train = read_table(&d.train, &cols, true)?;
    let test = read_table(&d.test, &cols, false)?;
    test.check_columns(&train, &d.test.display().to_string())?;
    Ok((train, test))
}

/// The method a `fit-predict` invocation describes.
pub fn method_config(a: &FitPredictArgs, n_train: usize, n_features: usize) -> MethodConfig {
    let base = match a.base {
        Base::Knn => ClassifierSpec::knn(a.knn_k.unwrap_or_else(|| knn_k_schedule(n_train, n_features))),
        Base::Logistic => ClassifierSpec::logistic(),
        Base::Lda => ClassifierSpec::lda(),
        Base::Tree => ClassifierSpec::tree(),
    };
    let method = match a.mode {
        Mode::Da => Method::DaBagging,
        Mode::Classical => Method::Bagging,
        Mode::None => Method::Single,
    };
    MethodConfig {
        method,
        base,
        b: a.b,
        resample: ResampleConfig { k: a.k, per_test_draws: None, eps_stop: a.eps_stop, t_max: a.t_max },
        standardize: a.standardize,
    }
}

fn cmd_fit_predict(a: &FitPredictArgs, seed: u64) -> CliResult<()> {
    let (train_t, test_t) = load_pair(&a.data)?;
    let (train, names) = training_set(&train_t, &a.data.train.display().to_string())?;
    let test = test_t.unlabeled()?;
    let method = method_config(a, train.n_rows(), train.n_features());
    method.base.validate()?;
    if let Some(cfg) = method.ensemble_config() {
        cfg.validate()?;
    }
    let anomaly = AnomalyConfig { k: a.anomaly_k, alpha: a.alpha, ..Default::default() };
    anomaly.validate()?;
    let out = predict_pipeline(&train, &test, &method, a.detect_anomalies.then_some(&anomaly), &RngStream::new(seed))?;
    let label = |p: &Option<usize>| p.map_or("anomaly".to_string(), |l| names[l - 1].clone());
    let bytes = csv_bytes(
        &["row".into(), "prediction".into()],
        out.predictions.iter().enumerate().map(|(i, p)| vec![i.to_string(), label(p)]),
    )?;
    emit(a.data.out.as_deref(), &bytes)?;
    if let Some(truth) = &test_t.labels {
        let scored: Vec<bool> =
            out.predictions.iter().zip(truth).filter(|(p, _)| p.is_some()).map(|(p, t)| &label(p) == t).collect();
        if !scored.is_empty() {
            let acc = scored.iter().filter(|&&c| c).count() as f64 / scored.len() as f64;
            print_stderr(&format!("accuracy {acc:.4} on {} retained test rows\n", scored.len()))?;
        }
    }
    Ok(())
}

fn cmd_detect(a: &DetectArgs, seed: u64) -> CliResult<()> {
    let (train_t, test_t) = load_pair(&a.data)?;
    let (train, names) = training_set(&train_t, &a.data.train.display().to_string())?;
    let test = test_t.unlabeled()?;
    let cfg = AnomalyConfig { k: a.k, alpha: a.alpha, ..Default::default() };
    cfg.validate()?;
    let metric = Metric::euclidean();
    let cal = calibrate(&train, &cfg, &metric, &RngStream::new(seed).tagged(Purpose::Split))?;
    let part = filter_anomalies(&test, &train, &cal, &metric)?;
    let flags = part.flags();
    let mut header = vec!["row".to_string(), "T".to_string()];
    header.extend(names.iter().map(|n| format!("score_{n}")));
    let rows = part.scores.iter().zip(&flags).enumerate().map(|(i, (s, &f))| {
        let mut r = vec![i.to_string(), u8::from(f).to_string()];
        r.extend(s.iter().map(|v| v.to_string()));
        r
    });
    let bytes = csv_bytes(&header, rows)?;
    emit(a.data.out.as_deref(), &bytes)?;
    if !flags.is_empty() {
        let n = flags.iter().filter(|&&f| f).count();
        log::info!("flagged {n} of {} test rows", flags.len());
    }
    Ok(())
}

fn print_stdout(s: &str) -> CliResult<()> {
    let mut out = std::io::stdout().lock();
    out.write_all(s.as_bytes())
        .and_then(|_| out.flush())
        .map_err(|e| CliError::Usage(format!("cannot write to stdout: {e}")))
}

fn print_stderr(s: &str) -> CliResult<()> {
    let mut err = std::io::stderr().lock();
    err.write_all(s.as_bytes())
        .and_then(|_| err.flush())
        .map_err(|e| CliError::Usage(format!("cannot write to stderr: {e}")))
}
