//! Command-line front end: `train`, `predict`, `evaluate`, `inspect` and a
//! `synth` helper for generating fixtures.
//!
//! Exit codes: 0 success, 1 usage/configuration, 2 data or model file,
//! 3 numerical failure.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::ops::ControlFlow;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::data::{load_auto, synth_make, train_test_split, write_libsvm, Dataset, SynthKind};
use crate::error::{Error, Result};
use crate::kernels::KernelFamily;
use crate::losses::LossKind;
use crate::metrics;
use crate::model::{Mode, TrainedModel};
use crate::modelio::{inspect_model, load_model, save_model};
use crate::real::Precision;
use crate::solver::PrimalEval;
use crate::train::{default_lambda_grid, lambda_grid_search, train_model, LogRow, TrainConfig};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "dualkern", version, about = "Kernel machines trained by dual block coordinate descent")]
pub struct Cli {
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train a model and write it to disk.
    Train(TrainArgs),
    /// Score a data file with a trained model.
    Predict(PredictArgs),
    /// Compare a predictions CSV with the labels of a data file.
    Evaluate(EvaluateArgs),
    /// Print a model file's metadata.
    Inspect(InspectArgs),
    /// Write a synthetic dataset in libsvm format.
    Synth(SynthArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum LossName {
    Square,
    Lp,
    L1,
    Huber,
    Svr,
    Hinge,
    SquaredHinge,
    Logistic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PrimalEvalName {
    Off,
    Subsample,
    Full,
}

#[derive(Debug, Clone, Default, Args)]
pub struct TrainArgs {
    /// Training data (libsvm, or CSV with the label in the last column).
    #[arg(long)]
    pub train: PathBuf,
    /// Validation data for progress metrics and the lambda grid.
    #[arg(long)]
    pub valid: Option<PathBuf>,
    /// Hold out this fraction of the training data for validation.
    #[arg(long)]
    pub valid_fraction: Option<f64>,
    /// Output model file.
    #[arg(long, short)]
    pub out: PathBuf,
    /// Progress log (CSV).
    #[arg(long)]
    pub log: Option<PathBuf>,
    /// Flat TOML file of settings; flags take precedence.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Continue from an existing model (rejected: training always starts fresh).
    #[arg(long)]
    pub resume: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub loss: Option<LossName>,
    /// Exponent of the Lp loss.
    #[arg(long)]
    pub p: Option<f64>,
    /// Huber threshold.
    #[arg(long)]
    pub delta: Option<f64>,
    /// Width of the SVR insensitive zone.
    #[arg(long)]
    pub epsilon: Option<f64>,
    #[arg(long)]
    pub lambda: Option<f64>,
    #[arg(long)]
    pub mode: Option<Mode>,
    #[arg(long)]
    pub kernel: Option<KernelFamily>,
    #[arg(long, conflicts_with = "sigma_median")]
    pub sigma: Option<f64>,
    /// Choose the bandwidth by the median heuristic (the default).
    #[arg(long)]
    pub sigma_median: bool,
    #[arg(long)]
    pub rff_dim: Option<usize>,
    #[arg(long)]
    pub block_size: Option<usize>,
    /// Outer iterations.
    #[arg(long)]
    pub iters: Option<usize>,
    #[arg(long)]
    pub seed_partition: Option<u64>,
    #[arg(long)]
    pub seed_rff: Option<u64>,
    #[arg(long)]
    pub seed_split: Option<u64>,
    #[arg(long)]
    pub precision: Option<Precision>,
    /// Log every this many outer iterations.
    #[arg(long)]
    pub log_every: Option<usize>,
    #[arg(long, value_enum)]
    pub primal_eval: Option<PrimalEvalName>,
    /// Sample size for `--primal-eval subsample`.
    #[arg(long)]
    pub primal_subsample: Option<usize>,
    /// Pick lambda from {2^-7, ..., 2^7} by validation score.
    #[arg(long)]
    pub lambda_grid: bool,
    #[arg(long)]
    pub delta_max: Option<f64>,
    #[arg(long)]
    pub eta: Option<f64>,
    #[arg(long)]
    pub tol: Option<f64>,
    #[arg(long)]
    pub tr_iters: Option<usize>,
    #[arg(long)]
    pub cg_iters: Option<usize>,
    /// Stop CG at a box violation without taking the violating step.
    #[arg(long)]
    pub literal_box_break: bool,
    /// Skip z-score normalization.
    #[arg(long)]
    pub no_zscore: bool,
    /// Leave the wall_seconds log column empty (reproducible logs).
    #[arg(long)]
    pub no_wall_clock: bool,
}

#[derive(Debug, Clone, Args)]
pub struct PredictArgs {
    #[arg(long, short)]
    pub model: PathBuf,
    /// Data to score, in the training data's format.
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, short)]
    pub out: PathBuf,
    /// Add a probability column (logistic models).
    #[arg(long)]
    pub proba: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MetricName {
    Rmse,
    RelErr,
    Accuracy,
    Auc,
}

#[derive(Debug, Clone, Args)]
pub struct EvaluateArgs {
    /// Predictions CSV written by `predict`.
    #[arg(long)]
    pub predictions: PathBuf,
    /// Data file holding the true labels.
    #[arg(long)]
    pub labels: PathBuf,
    /// Metrics to report (default: all that apply).
    #[arg(long, value_enum, value_delimiter = ',')]
    pub metrics: Vec<MetricName>,
}

#[derive(Debug, Clone, Args)]
pub struct InspectArgs {
    pub model: PathBuf,
    /// Print the raw metadata as JSON.
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SynthName {
    TwoGaussians,
    LinearRegression,
    Sinusoid,
}

#[derive(Debug, Clone, Args)]
pub struct SynthArgs {
    #[arg(long, value_enum)]
    pub kind: SynthName,
    #[arg(long)]
    pub n: usize,
    #[arg(long)]
    pub d: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Class separation for two-gaussians, noise level otherwise.
    #[arg(long)]
    pub param: Option<f64>,
    #[arg(long, short)]
    pub out: PathBuf,
}

/// Exit code for a library error.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::InvalidParameter(_) | Error::Unsupported(_) => EXIT_USAGE,
        Error::Numerical(_) | Error::DomainViolation { .. } => EXIT_NUMERICAL,
        Error::DimensionMismatch { .. }
        | Error::DegenerateData(_)
        | Error::Parse { .. }
        | Error::Data(_)
        | Error::ModelFormat(_)
        | Error::Io(_) => EXIT_DATA,
    }
}

/// Parses `args` (including the program name) and runs the command, writing
/// reports to `out` and diagnostics to `err`. Returns the exit code.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let text = e.render().to_string();
            if code == EXIT_OK {
                let _ = write!(out, "{text}");
            } else {
                let _ = write!(err, "{text}");
            }
            return code;
        }
    };
    if let Some(t) = cli.threads {
        if t == 0 {
            let _ = writeln!(err, "error: --threads must be >= 1");
            return EXIT_USAGE;
        }
        // a pool may already exist when called repeatedly in one process
        let _ = rayon::ThreadPoolBuilder::new().num_threads(t).build_global();
    }
    let res = match &cli.command {
        Command::Train(a) => cmd_train(a, out),
        Command::Predict(a) => cmd_predict(a),
        Command::Evaluate(a) => cmd_evaluate(a, out),
        Command::Inspect(a) => cmd_inspect(a, out),
        Command::Synth(a) => cmd_synth(a),
    };
    match res {
        Ok(()) => EXIT_OK,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            exit_code(&e)
        }
    }
}

type ConfigTable = BTreeMap<String, toml::Value>;

fn read_config(path: &Path) -> Result<ConfigTable> {
    let text = std::fs::read_to_string(path)?;
    toml::from_str(&text).map_err(|e| Error::InvalidParameter(format!("{}: {e}", path.display())))
}

fn get_f64(t: &ConfigTable, key: &str) -> Result<Option<f64>> {
    match t.get(key) {
        None => Ok(None),
        Some(toml::Value::Float(v)) => Ok(Some(*v)),
        Some(toml::Value::Integer(v)) => Ok(Some(*v as f64)),
        Some(v) => Err(Error::param(format!("config key `{key}` must be a number, got {v}"))),
    }
}

fn get_uint(t: &ConfigTable, key: &str) -> Result<Option<u64>> {
    match t.get(key) {
        None => Ok(None),
        Some(toml::Value::Integer(v)) if *v >= 0 => Ok(Some(*v as u64)),
        Some(v) => Err(Error::param(format!("config key `{key}` must be a non-negative integer, got {v}"))),
    }
}

fn get_bool(t: &ConfigTable, key: &str) -> Result<Option<bool>> {
    match t.get(key) {
        None => Ok(None),
        Some(toml::Value::Boolean(v)) => Ok(Some(*v)),
        Some(v) => Err(Error::param(format!("config key `{key}` must be true or false, got {v}"))),
    }
}

fn get_str<'a>(t: &'a ConfigTable, key: &str) -> Result<Option<&'a str>> {
    match t.get(key) {
        None => Ok(None),
        Some(toml::Value::String(v)) => Ok(Some(v)),
        Some(v) => Err(Error::param(format!("config key `{key}` must be a string, got {v}"))),
    }
}

fn parse_value<T: std::str::FromStr<Err = String>>(key: &str, v: Option<&str>) -> Result<Option<T>> {
    v.map(|s| s.parse::<T>().map_err(|e| Error::param(format!("config key `{key}`: {e}"))))
        .transpose()
}

fn value_enum<T: ValueEnum>(key: &str, v: Option<&str>) -> Result<Option<T>> {
    v.map(|s| T::from_str(s, true).map_err(|e| Error::param(format!("config key `{key}`: {e}"))))
        .transpose()
}

const CONFIG_KEYS: &[&str] = &[
    "loss", "p", "delta", "epsilon", "lambda", "mode", "kernel", "sigma", "rff_dim", "block_size",
    "iters", "seed_partition", "seed_rff", "seed_split", "precision", "log_every", "primal_eval",
    "primal_subsample", "delta_max", "eta", "tol", "tr_iters", "cg_iters", "literal_box_break",
    "zscore", "valid_fraction",
];

/// Training settings after applying defaults, then the config file, then flags.
pub fn resolve_config(args: &TrainArgs) -> Result<(TrainConfig, Option<f64>)> {
    let table = match &args.config {
        Some(p) => read_config(p)?,
        None => ConfigTable::new(),
    };
    if let Some(bad) = table.keys().find(|k| !CONFIG_KEYS.contains(&k.as_str())) {
        return Err(Error::param(format!("unknown config key `{bad}`")));
    }
    let mut cfg = TrainConfig::default();

    let loss_name = args
        .loss
        .or(value_enum::<LossName>("loss", get_str(&table, "loss")?)?)
        .unwrap_or(LossName::Square);
    let p = args.p.or(get_f64(&table, "p")?).unwrap_or(3.0);
    let delta = args.delta.or(get_f64(&table, "delta")?).unwrap_or(1.0);
    let epsilon = args.epsilon.or(get_f64(&table, "epsilon")?).unwrap_or(0.25);
    cfg.loss = match loss_name {
        LossName::Square => LossKind::Square,
        LossName::Lp => LossKind::lp(p)?,
        LossName::L1 => LossKind::L1Reg,
        LossName::Huber => LossKind::huber(delta)?,
        LossName::Svr => LossKind::svr(epsilon)?,
        LossName::Hinge => LossKind::HingeL1,
        LossName::SquaredHinge => LossKind::SquaredHingeL2,
        LossName::Logistic => LossKind::Logistic,
    };
    if let Some(v) = args.lambda.or(get_f64(&table, "lambda")?) {
        cfg.lambda = v;
    }
    if let Some(v) = args.mode.or(parse_value("mode", get_str(&table, "mode")?)?) {
        cfg.mode = v;
    }
    if let Some(v) = args.kernel.or(parse_value("kernel", get_str(&table, "kernel")?)?) {
        cfg.kernel = v;
    }
    cfg.sigma = if args.sigma_median {
        None
    } else if let Some(s) = args.sigma {
        Some(s)
    } else {
        match table.get("sigma") {
            None => None,
            Some(toml::Value::String(s)) if s == "median" => None,
            Some(_) => get_f64(&table, "sigma")?,
        }
    };
    if let Some(v) = args.rff_dim.or(get_uint(&table, "rff_dim")?.map(|v| v as usize)) {
        cfg.rff_dim = v;
    }
    cfg.block_size = args
        .block_size
        .or(get_uint(&table, "block_size")?.map(|v| v as usize));
    if let Some(v) = args.iters.or(get_uint(&table, "iters")?.map(|v| v as usize)) {
        cfg.iterations = v;
    }
    if let Some(v) = args.seed_partition.or(get_uint(&table, "seed_partition")?) {
        cfg.seeds.partition = v;
    }
    if let Some(v) = args.seed_rff.or(get_uint(&table, "seed_rff")?) {
        cfg.seeds.rff = v;
    }
    if let Some(v) = args.seed_split.or(get_uint(&table, "seed_split")?) {
        cfg.seeds.split = v;
    }
    if let Some(v) = args.precision.or(parse_value("precision", get_str(&table, "precision")?)?) {
        cfg.precision = v;
    }
    if let Some(v) = args.log_every.or(get_uint(&table, "log_every")?.map(|v| v as usize)) {
        if v == 0 {
            return Err(Error::param("log cadence must be >= 1"));
        }
        cfg.log_every = v;
    }
    let sub = args
        .primal_subsample
        .or(get_uint(&table, "primal_subsample")?.map(|v| v as usize))
        .unwrap_or(4096);
    let pe = args
        .primal_eval
        .or(value_enum::<PrimalEvalName>("primal_eval", get_str(&table, "primal_eval")?)?)
        .unwrap_or(PrimalEvalName::Subsample);
    cfg.primal_eval = match pe {
        PrimalEvalName::Off => PrimalEval::Off,
        PrimalEvalName::Subsample if sub == 0 => return Err(Error::param("primal subsample must be >= 1")),
        PrimalEvalName::Subsample => PrimalEval::Subsample(sub),
        PrimalEvalName::Full => PrimalEval::Full,
    };
    let tr = &mut cfg.trust_region;
    if let Some(v) = args.delta_max.or(get_f64(&table, "delta_max")?) {
        tr.delta_max = v;
    }
    if let Some(v) = args.eta.or(get_f64(&table, "eta")?) {
        tr.eta = v;
    }
    if let Some(v) = args.tol.or(get_f64(&table, "tol")?) {
        tr.tol = v;
    }
    if let Some(v) = args.tr_iters.or(get_uint(&table, "tr_iters")?.map(|v| v as usize)) {
        tr.max_tr_iters = v;
    }
    if let Some(v) = args.cg_iters.or(get_uint(&table, "cg_iters")?.map(|v| v as usize)) {
        tr.max_cg_iters = v;
    }
    tr.literal_box_break = args.literal_box_break || get_bool(&table, "literal_box_break")?.unwrap_or(false);
    cfg.zscore = !args.no_zscore && get_bool(&table, "zscore")?.unwrap_or(true);
    let valid_fraction = args.valid_fraction.or(get_f64(&table, "valid_fraction")?);
    cfg.validate()?;
    Ok((cfg, valid_fraction))
}

fn align_dims(a: &mut Dataset, b: &mut Dataset) -> Result<()> {
    let d = a.dim().max(b.dim());
    a.features = a.features.clone().with_dim(d)?;
    b.features = b.features.clone().with_dim(d)?;
    Ok(())
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

struct LogWriter {
    w: BufWriter<File>,
    ovr: bool,
    wall_clock: bool,
    error: Option<io::Error>,
}

impl LogWriter {
    fn create(path: &Path, ovr: bool, wall_clock: bool) -> Result<Self> {
        let mut w = BufWriter::new(File::create(path)?);
        if ovr {
            write!(w, "class,")?;
        }
        writeln!(
            w,
            "iteration,wall_seconds,dual_objective,primal_objective,duality_gap,val_loss,val_metric"
        )?;
        Ok(LogWriter {
            w,
            ovr,
            wall_clock,
            error: None,
        })
    }

    fn row(&mut self, r: &LogRow) {
        let res = (|| -> io::Result<()> {
            if self.ovr {
                write!(self.w, "{},", r.part)?;
            }
            let wall = if self.wall_clock {
                r.wall_seconds.to_string()
            } else {
                String::new()
            };
            writeln!(
                self.w,
                "{},{},{},{},{},{},{}",
                r.iteration,
                wall,
                r.dual_objective,
                opt(r.primal_objective),
                opt(r.duality_gap),
                opt(r.val_loss),
                opt(r.val_metric)
            )
        })();
        if let Err(e) = res {
            self.error.get_or_insert(e);
        }
    }

    fn finish(mut self) -> Result<()> {
        if let Some(e) = self.error {
            return Err(e.into());
        }
        self.w.flush()?;
        Ok(())
    }
}

pub fn cmd_train(args: &TrainArgs, out: &mut dyn Write) -> Result<()> {
    if let Some(p) = &args.resume {
        return Err(Error::Unsupported(format!(
            "resuming from {} (training always starts from the initial point; rerun without --resume)",
            p.display()
        )));
    }
    let (cfg, valid_fraction) = resolve_config(args)?;
    let mut train = load_auto(&args.train)?;
    if train.is_empty() {
        return Err(Error::Data(format!("{}: no training rows", args.train.display())));
    }
    let mut valid = match (&args.valid, valid_fraction) {
        (Some(p), _) => Some(load_auto(p)?),
        (None, Some(f)) => {
            if !(f > 0.0 && f < 1.0) {
                return Err(Error::param(format!("validation fraction must lie in (0, 1), got {f}")));
            }
            let (tr, va) = train_test_split(&train, 1.0 - f, cfg.seeds.split)?;
            train = tr;
            Some(va)
        }
        (None, None) => None,
    };
    if cfg.loss.is_classification() {
        train.remap_binary_labels();
        if let Some(v) = valid.as_mut() {
            v.remap_binary_labels();
        }
    }
    if let Some(v) = valid.as_mut() {
        align_dims(&mut train, v)?;
    }

    let cfg = if args.lambda_grid {
        let v = valid.as_ref().ok_or_else(|| {
            Error::param("--lambda-grid needs --valid or --valid-fraction")
        })?;
        let (best, scores) = lambda_grid_search(&cfg, &train, v, &default_lambda_grid())?;
        writeln!(out, "lambda,validation_score")?;
        for (l, s) in &scores {
            writeln!(out, "{l},{s}")?;
        }
        writeln!(out, "selected lambda {}", best.meta.lambda)?;
        TrainConfig {
            lambda: best.meta.lambda,
            ..cfg
        }
    } else {
        cfg
    };

    let ovr = cfg.loss.is_classification() && train.classes().len() > 2;
    let mut log = match &args.log {
        Some(p) => Some(LogWriter::create(p, ovr, !args.no_wall_clock)?),
        None => None,
    };
    let model = train_model(&cfg, &train, valid.as_ref(), &mut |r| {
        if let Some(l) = log.as_mut() {
            l.row(r);
        }
        ControlFlow::Continue(())
    })?;
    if let Some(l) = log {
        l.finish()?;
    }
    save_model(&model, &args.out)?;
    Ok(())
}

fn load_for_model(model: &TrainedModel, path: &Path) -> Result<Dataset> {
    let mut data = load_auto(path)?;
    if data.is_empty() {
        return Ok(data);
    }
    let d = data.dim();
    if d > model.meta.dim {
        return Err(Error::Data(format!(
            "{} has {d} features but the model was trained on {}",
            path.display(),
            model.meta.dim
        )));
    }
    data.features = data.features.with_dim(model.meta.dim).map_err(|_| {
        Error::Data(format!(
            "{} has {d} features but the model was trained on {}",
            path.display(),
            model.meta.dim
        ))
    })?;
    Ok(data)
}

pub fn cmd_predict(args: &PredictArgs) -> Result<()> {
    let model = load_model(&args.model)?;
    let classify = model.meta.loss.is_classification();
    if args.proba && (model.meta.loss != LossKind::Logistic || model.meta.is_ovr()) {
        return Err(Error::Unsupported(format!(
            "probability output for {}{} models",
            if model.meta.is_ovr() { "one-vs-rest " } else { "" },
            model.meta.loss
        )));
    }
    let data = load_for_model(&model, &args.data)?;
    let mut w = BufWriter::new(File::create(&args.out)?);
    write!(w, "index,raw")?;
    if classify {
        write!(w, ",label")?;
    }
    if args.proba {
        write!(w, ",probability")?;
    }
    writeln!(w)?;
    if !data.is_empty() {
        let raw = model.predict_raw(&data.features)?;
        let labels = if classify {
            Some(model.predict_label(&data.features)?)
        } else {
            None
        };
        for (i, &u) in raw.iter().enumerate() {
            write!(w, "{i},{u}")?;
            if let Some(l) = &labels {
                write!(w, ",{}", l[i])?;
            }
            if args.proba {
                write!(w, ",{}", crate::model::sigmoid(u))?;
            }
            writeln!(w)?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Columns of a predictions CSV.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Predictions {
    pub raw: Vec<f64>,
    pub label: Option<Vec<f64>>,
    pub probability: Option<Vec<f64>>,
}

pub fn read_predictions(path: &Path) -> Result<Predictions> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| Error::Data(format!("{}: {e}", path.display())))?;
    let headers = rdr
        .headers()
        .map_err(|e| Error::Data(format!("{}: {e}", path.display())))?
        .clone();
    let col = |name: &str| headers.iter().position(|h| h == name);
    let raw_c = col("raw").ok_or_else(|| Error::Data(format!("{}: no `raw` column", path.display())))?;
    let label_c = col("label");
    let prob_c = col("probability");
    let mut p = Predictions {
        raw: Vec::new(),
        label: label_c.map(|_| Vec::new()),
        probability: prob_c.map(|_| Vec::new()),
    };
    for (k, rec) in rdr.records().enumerate() {
        let line = k + 2;
        let rec = rec.map_err(|e| Error::Data(format!("{}:{line}: {e}", path.display())))?;
        let num = |c: usize| -> Result<f64> {
            let cell = rec.get(c).unwrap_or("");
            cell.parse().map_err(|_| Error::Parse {
                path: path.to_path_buf(),
                line,
                message: format!("non-numeric cell `{cell}`"),
            })
        };
        p.raw.push(num(raw_c)?);
        if let (Some(c), Some(v)) = (label_c, p.label.as_mut()) {
            v.push(num(c)?);
        }
        if let (Some(c), Some(v)) = (prob_c, p.probability.as_mut()) {
            v.push(num(c)?);
        }
    }
    Ok(p)
}

pub fn cmd_evaluate(args: &EvaluateArgs, out: &mut dyn Write) -> Result<()> {
    let pred = read_predictions(&args.predictions)?;
    let truth = load_auto(&args.labels)?.labels;
    if pred.raw.len() != truth.len() {
        return Err(Error::Data(format!(
            "{} predictions for {} labels",
            pred.raw.len(),
            truth.len()
        )));
    }
    let wanted: Vec<MetricName> = if args.metrics.is_empty() {
        if pred.label.is_some() {
            vec![MetricName::Accuracy, MetricName::Auc]
        } else {
            vec![MetricName::Rmse, MetricName::RelErr]
        }
    } else {
        args.metrics.clone()
    };
    for m in wanted {
        let (name, v) = match m {
            MetricName::Rmse => ("rmse", metrics::rmse(&pred.raw, &truth)?),
            MetricName::RelErr => ("relative_error", metrics::relative_error(&pred.raw, &truth)?),
            MetricName::Accuracy => {
                let l = pred
                    .label
                    .as_ref()
                    .ok_or_else(|| Error::Data("accuracy needs a label column".into()))?;
                ("accuracy", metrics::accuracy(l, &truth)?)
            }
            MetricName::Auc => {
                let s = pred.probability.as_ref().unwrap_or(&pred.raw);
                let top = truth.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let binary: Vec<f64> = truth.iter().map(|&y| if y == top { 1.0 } else { -1.0 }).collect();
                ("auc", metrics::auc(s, &binary)?)
            }
        };
        writeln!(out, "{name},{v}")?;
    }
    Ok(())
}

pub fn cmd_inspect(args: &InspectArgs, out: &mut dyn Write) -> Result<()> {
    let h = inspect_model(&args.model)?;
    if args.json {
        let s = serde_json::to_string_pretty(&h).map_err(|e| Error::ModelFormat(e.to_string()))?;
        writeln!(out, "{s}")?;
        return Ok(());
    }
    let m = &h.model;
    writeln!(out, "loss: {}", m.loss)?;
    writeln!(out, "lambda: {}", m.lambda)?;
    writeln!(out, "mode: {}", m.mode)?;
    writeln!(out, "kernel: {}", m.kernel.family)?;
    writeln!(
        out,
        "sigma: {}{}",
        m.kernel.sigma,
        if m.sigma_from_median { " (median heuristic)" } else { "" }
    )?;
    if let Some(r) = m.rff_dim {
        writeln!(out, "rff_dim: {r}")?;
    }
    writeln!(out, "precision: {}", m.precision)?;
    writeln!(out, "block_size: {}", m.block_size)?;
    writeln!(
        out,
        "seeds: partition={} rff={} split={}",
        m.seeds.partition, m.seeds.rff, m.seeds.split
    )?;
    writeln!(out, "n_train: {}", m.n_train)?;
    writeln!(out, "dim: {}", m.dim)?;
    writeln!(out, "normalized: {}", h.has_zscore)?;
    if !m.classes.is_empty() {
        let c: Vec<String> = m.classes.iter().map(f64::to_string).collect();
        writeln!(out, "classes: {}", c.join(" "))?;
    }
    for (i, p) in m.parts.iter().enumerate() {
        let prefix = if m.is_ovr() { format!("class {i} ") } else { String::new() };
        writeln!(out, "{prefix}iterations: {}", p.iterations)?;
        writeln!(out, "{prefix}dual_objective: {}", p.dual_objective)?;
        writeln!(out, "{prefix}primal_objective: {}", opt(p.primal_objective))?;
        writeln!(out, "{prefix}duality_gap: {}", opt(p.duality_gap))?;
    }
    Ok(())
}

pub fn cmd_synth(args: &SynthArgs) -> Result<()> {
    let kind = match args.kind {
        SynthName::TwoGaussians => SynthKind::TwoGaussians {
            separation: args.param.unwrap_or(6.0),
        },
        SynthName::LinearRegression => SynthKind::LinearRegression {
            noise: args.param.unwrap_or(0.1),
        },
        SynthName::Sinusoid => SynthKind::Sinusoid {
            noise: args.param.unwrap_or(0.1),
        },
    };
    let ds = synth_make(kind, args.n, args.d, args.seed)?;
    write_libsvm(&args.out, &ds)
}
