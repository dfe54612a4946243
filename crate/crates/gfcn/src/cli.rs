//! The `gfcn` command line. Results go to stdout as JSON (CSV for sweeps
//! without `--out`); diagnostics go to stderr.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::{Args, Parser, Subcommand};
use gfcn_core::fairing::{self, condition_bound, Method};
use gfcn_core::synth::PlantedPartition;
use gfcn_core::{Dataset, FairingConfig, LabelMode, TrainConfig};
use serde::Serialize;

use crate::config::ConfigFile;
use crate::experiment::{
    self, csv_rows, run_experiment, run_once, sensitivity_sweep, ExperimentConfig, ExperimentError,
    ModelKind, RunSpec, SweepParam,
};
use crate::io::{self, CheckpointHeader, DataError, TaskManifest, CHECKPOINT_FORMAT};

/// Environment variable naming the directory that holds dataset folders.
pub const DATA_ROOT_VAR: &str = "GFCN_DATA_ROOT";

#[derive(Debug, Parser)]
#[command(
    name = "gfcn",
    version,
    about = "Graph fairing convolutional networks for semi-supervised node anomaly detection"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Print dataset statistics.
    Info(InfoArgs),
    /// Smooth node features with the implicit fairing filter (I + sL)⁻¹.
    Fair(FairArgs),
    /// Train one model and report its test AUC.
    Train(TrainArgs),
    /// Train over several seeds and aggregate test AUCs.
    Experiment(ExperimentArgs),
    /// Sweep alpha or beta over a grid at one or more label rates.
    Sweep(SweepArgs),
    /// Write a synthetic planted-partition dataset.
    Synth(SynthArgs),
}

#[derive(Debug, Args)]
pub struct InfoArgs {
    /// Dataset directory, or a name under $GFCN_DATA_ROOT.
    pub dataset: PathBuf,
}

#[derive(Debug, Args)]
pub struct FairArgs {
    /// Dataset directory, or a name under $GFCN_DATA_ROOT.
    pub dataset: PathBuf,
    /// Fairing scale.
    #[arg(long, default_value_t = 1.0)]
    pub s: f64,
    /// direct (conjugate gradient) or jacobi.
    #[arg(long, default_value = "direct")]
    pub method: String,
    /// Relative residual tolerance.
    #[arg(long, default_value_t = FairingConfig::DEFAULT_TOL)]
    pub tol: f64,
    #[arg(long)]
    pub max_iters: Option<usize>,
    /// Output path for the smoothed features (features.bin format).
    #[arg(long)]
    pub out: PathBuf,
}

/// Training settings shared by train, experiment and sweep. Unset flags fall
/// back to `--config`, then to built-in defaults.
#[derive(Debug, Args, Clone, Default)]
pub struct TrainingFlags {
    /// `key = value` file with defaults for any flag of this command.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Fraction of nodes whose labels are known, in (0, 1). Default 0.05.
    #[arg(long)]
    pub label_rate: Option<f64>,
    /// normal_only or both. Default normal_only.
    #[arg(long)]
    pub label_mode: Option<String>,
    /// gfcn or gcn. Default gfcn.
    #[arg(long)]
    pub model: Option<String>,
    /// Weight of the anomalous-class loss term. Default 4.
    #[arg(long)]
    pub alpha: Option<f64>,
    /// L2 penalty weight. Default 0.01.
    #[arg(long)]
    pub beta: Option<f64>,
    /// Adam learning rate. Default 0.05.
    #[arg(long)]
    pub lr: Option<f64>,
    /// Maximum epochs. Default 100.
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Early-stopping patience in epochs. Default 10.
    #[arg(long)]
    pub patience: Option<usize>,
    /// Comma-separated hidden widths. Default 64.
    #[arg(long)]
    pub hidden: Option<String>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    pub dataset: PathBuf,
    #[command(flatten)]
    pub flags: TrainingFlags,
    /// Seed for the label split and initialization. Default 0.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub checkpoint_out: Option<PathBuf>,
    /// Per-epoch losses as JSON lines.
    #[arg(long)]
    pub history_out: Option<PathBuf>,
    /// Label split as JSON.
    #[arg(long)]
    pub task_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ExperimentArgs {
    pub dataset: PathBuf,
    #[command(flatten)]
    pub flags: TrainingFlags,
    /// Number of seeds. Default 10.
    #[arg(long)]
    pub n_seeds: Option<usize>,
    /// First seed; seeds are consecutive. Default 0.
    #[arg(long)]
    pub first_seed: Option<u64>,
    /// Per-seed results as CSV.
    #[arg(long)]
    pub csv_out: Option<PathBuf>,
    /// Report failed seeds and aggregate the rest instead of failing.
    #[arg(long)]
    pub allow_failures: bool,
    /// Worker threads. Default: all cores.
    #[arg(long)]
    pub jobs: Option<usize>,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    pub dataset: PathBuf,
    #[command(flatten)]
    pub flags: TrainingFlags,
    /// alpha or beta.
    #[arg(long)]
    pub param: String,
    /// Comma-separated values.
    #[arg(long)]
    pub grid: String,
    /// Comma-separated label rates. Default: the single --label-rate.
    #[arg(long)]
    pub label_rates: Option<String>,
    #[arg(long)]
    pub n_seeds: Option<usize>,
    #[arg(long)]
    pub first_seed: Option<u64>,
    /// CSV destination; without it the CSV goes to stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub allow_failures: bool,
    #[arg(long)]
    pub jobs: Option<usize>,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Output dataset directory.
    pub out: PathBuf,
    #[arg(long, default_value = "planted")]
    pub name: String,
    #[arg(long, default_value_t = 600)]
    pub nodes: usize,
    #[arg(long, default_value_t = 200)]
    pub features: usize,
    #[arg(long, default_value_t = 4.0)]
    pub avg_degree: f64,
    #[arg(long, default_value_t = 0.8)]
    pub homophily: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),

    #[error(transparent)]
    Data(#[from] DataError),

    #[error(transparent)]
    Core(#[from] gfcn_core::Error),

    #[error(transparent)]
    Experiment(#[from] ExperimentError),

    #[error("writing output: {0}")]
    Output(String),
}

pub const EXIT_USAGE: i32 = 2;
pub const EXIT_DATA: i32 = 3;
pub const EXIT_NUMERIC: i32 = 4;

fn core_exit_code(e: &gfcn_core::Error) -> i32 {
    use gfcn_core::Error::*;
    match e {
        NotConverged(_) | NonFiniteLoss { .. } | NonFinite { .. } => EXIT_NUMERIC,
        InvalidParameter(_) | EmptyLabeledSet => EXIT_USAGE,
        _ => EXIT_DATA,
    }
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Data(_) => EXIT_DATA,
            CliError::Core(e) => core_exit_code(e),
            CliError::Experiment(ExperimentError::Seed { source, .. }) => core_exit_code(source),
            CliError::Experiment(ExperimentError::AllFailed { .. }) => EXIT_NUMERIC,
            CliError::Experiment(ExperimentError::Invalid(_)) => EXIT_USAGE,
            CliError::Output(_) => 1,
        }
    }
}

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

/// A directory as given, or the same name under `$GFCN_DATA_ROOT`.
pub fn resolve_dataset(path: &Path) -> Result<PathBuf, CliError> {
    if path.is_dir() {
        return Ok(path.to_path_buf());
    }
    if path.is_relative() {
        if let Some(root) = std::env::var_os(DATA_ROOT_VAR) {
            let candidate = Path::new(&root).join(path);
            if candidate.is_dir() {
                return Ok(candidate);
            }
        }
    }
    Err(usage(format!("dataset directory {} not found", path.display())))
}

fn load(path: &Path) -> Result<Dataset, CliError> {
    Ok(io::load_dataset(&resolve_dataset(path)?)?)
}

fn parse_list<T: FromStr>(what: &str, text: &str) -> Result<Vec<T>, CliError> {
    text.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| s.parse().map_err(|_| usage(format!("{what}: {s:?} is not a valid value"))))
        .collect()
}

/// Flag value, else config value, else nothing.
fn pick<T: FromStr>(flag: Option<T>, cfg: &ConfigFile, key: &str) -> Result<Option<T>, CliError> {
    match (flag, cfg.get(key)) {
        (Some(v), _) => Ok(Some(v)),
        (None, Some(text)) => text
            .parse()
            .map(Some)
            .map_err(|_| usage(format!("config key {key}: {text:?} is not a valid value"))),
        (None, None) => Ok(None),
    }
}

const CONFIG_KEYS: &[&str] = &[
    "label_rate", "label_mode", "model", "alpha", "beta", "lr", "epochs", "patience", "hidden",
    "seed", "n_seeds", "first_seed", "jobs",
];

fn load_config(path: Option<&Path>) -> Result<ConfigFile, CliError> {
    let Some(path) = path else {
        return Ok(ConfigFile::default());
    };
    let cfg = ConfigFile::load(path).map_err(CliError::Usage)?;
    if let Some(key) = cfg.keys().find(|k| !CONFIG_KEYS.contains(k)) {
        return Err(usage(format!("{}: unknown key {key:?}", path.display())));
    }
    Ok(cfg)
}

fn run_spec(flags: &TrainingFlags, cfg: &ConfigFile, seed: u64) -> Result<RunSpec, CliError> {
    let defaults = TrainConfig::default();
    let label_rate = pick(flags.label_rate, cfg, "label_rate")?.unwrap_or(0.05);
    if !(label_rate > 0.0 && label_rate < 1.0) {
        return Err(usage(format!("--label-rate must lie in (0, 1), got {label_rate}")));
    }
    let label_mode: LabelMode = match pick(flags.label_mode.clone(), cfg, "label_mode")? {
        Some(text) => text.parse().map_err(|e: gfcn_core::Error| usage(e.to_string()))?,
        None => LabelMode::default(),
    };
    let model: ModelKind = match pick(flags.model.clone(), cfg, "model")? {
        Some(text) => text.parse().map_err(usage)?,
        None => ModelKind::default(),
    };
    let hidden = match pick(flags.hidden.clone(), cfg, "hidden")? {
        Some(text) => parse_list("--hidden", &text)?,
        None => defaults.hidden.clone(),
    };
    let train = TrainConfig {
        learning_rate: pick(flags.lr, cfg, "lr")?.unwrap_or(defaults.learning_rate),
        max_epochs: pick(flags.epochs, cfg, "epochs")?.unwrap_or(defaults.max_epochs),
        patience: pick(flags.patience, cfg, "patience")?.unwrap_or(defaults.patience),
        alpha: pick(flags.alpha, cfg, "alpha")?.unwrap_or(defaults.alpha),
        beta: pick(flags.beta, cfg, "beta")?.unwrap_or(defaults.beta),
        seed,
        hidden,
    };
    train.validate().map_err(|e| usage(e.to_string()))?;
    Ok(RunSpec {
        label_rate,
        label_mode,
        model,
        train,
    })
}

fn experiment_config(
    flags: &TrainingFlags,
    cfg: &ConfigFile,
    n_seeds: Option<usize>,
    first_seed: Option<u64>,
    allow_failures: bool,
) -> Result<ExperimentConfig, CliError> {
    let n = pick(n_seeds, cfg, "n_seeds")?.unwrap_or(10);
    if n == 0 {
        return Err(usage("--n-seeds must be at least 1"));
    }
    let first = pick(first_seed, cfg, "first_seed")?.unwrap_or(0);
    Ok(ExperimentConfig {
        run: run_spec(flags, cfg, first)?,
        seeds: (0..n as u64).map(|k| first.wrapping_add(k)).collect(),
        allow_failures,
    })
}

fn jobs(flag: Option<usize>, cfg: &ConfigFile) -> Result<Option<usize>, CliError> {
    match pick(flag, cfg, "jobs")? {
        Some(0) => Err(usage("--jobs must be at least 1")),
        other => Ok(other),
    }
}

fn emit_json<W: Write, T: Serialize>(out: &mut W, value: &T) -> Result<(), CliError> {
    serde_json::to_writer_pretty(&mut *out, value).map_err(|e| CliError::Output(e.to_string()))?;
    writeln!(out).map_err(|e| CliError::Output(e.to_string()))
}

#[derive(Serialize)]
struct InfoReport {
    name: String,
    nodes: usize,
    edges: usize,
    features: usize,
    classes: usize,
    class_counts: Vec<usize>,
    smallest_class: Option<usize>,
    anomaly_rate: f64,
}

fn cmd_info<W: Write>(args: &InfoArgs, out: &mut W) -> Result<(), CliError> {
    let ds = load(&args.dataset)?;
    emit_json(
        out,
        &InfoReport {
            name: ds.name.clone(),
            nodes: ds.num_nodes(),
            edges: ds.graph.num_edges(),
            features: ds.features.cols(),
            classes: ds.num_classes,
            class_counts: ds.class_counts(),
            smallest_class: ds.smallest_class(),
            anomaly_rate: ds.anomaly_rate(),
        },
    )
}

#[derive(Serialize)]
struct FairReport {
    dataset: String,
    s: f64,
    method: &'static str,
    iterations: usize,
    final_residual: f64,
    max_contraction: Option<f64>,
    contraction_bound: f64,
    condition_bound: f64,
}

fn cmd_fair<W: Write>(args: &FairArgs, out: &mut W) -> Result<(), CliError> {
    let (method, name) = match args.method.as_str() {
        "direct" => (Method::Direct, "direct"),
        "jacobi" => (Method::Jacobi, "jacobi"),
        other => return Err(usage(format!("unknown method {other:?}, expected direct or jacobi"))),
    };
    let mut cfg = FairingConfig::new(args.s).with_tol(args.tol);
    if let Some(m) = args.max_iters {
        cfg = cfg.with_max_iters(m);
    }
    cfg.validate().map_err(|e| usage(e.to_string()))?;
    let ds = load(&args.dataset)?;
    let (h, report) = fairing::fair(&ds.graph, &ds.features, &cfg, method)?;
    io::write_features(&args.out, &h)?;
    emit_json(
        out,
        &FairReport {
            dataset: ds.name,
            s: args.s,
            method: name,
            iterations: report.iterations,
            final_residual: report.final_residual,
            max_contraction: report.contraction_estimates.iter().copied().reduce(f64::max),
            contraction_bound: args.s / (1.0 + args.s),
            condition_bound: condition_bound(args.s),
        },
    )
}

#[derive(Serialize)]
struct TrainReport {
    dataset: String,
    model: ModelKind,
    label_rate: f64,
    label_mode: &'static str,
    seed: u64,
    alpha: f64,
    beta: f64,
    auc: Option<f64>,
    epochs_trained: usize,
    best_epoch: usize,
    best_val_loss: f64,
    num_train: usize,
    num_val: usize,
    num_test: usize,
}

fn cmd_train<W: Write>(args: &TrainArgs, out: &mut W) -> Result<(), CliError> {
    let cfg = load_config(args.flags.config.as_deref())?;
    let seed = pick(args.seed, &cfg, "seed")?.unwrap_or(0);
    let spec = run_spec(&args.flags, &cfg, seed)?;
    let ds = load(&args.dataset)?;
    let run = run_once(&ds, &spec)?;

    if let Some(path) = &args.checkpoint_out {
        let header = CheckpointHeader {
            format: CHECKPOINT_FORMAT.to_string(),
            model: spec.model.as_str().to_string(),
            dims: run.params.dims().to_vec(),
            seed,
            num_layers: run.params.num_layers(),
            num_matrices: run.params.matrices().len(),
        };
        io::write_checkpoint(path, &header, &run.params.matrices())?;
    }
    if let Some(path) = &args.history_out {
        io::write_history(path, &run.result.history)?;
    }
    if let Some(path) = &args.task_out {
        io::write_json(path, &TaskManifest::new(&ds.name, &run.task))?;
    }
    let r = &run.result;
    emit_json(
        out,
        &TrainReport {
            dataset: ds.name.clone(),
            model: spec.model,
            label_rate: spec.label_rate,
            label_mode: spec.label_mode.as_str(),
            seed,
            alpha: spec.train.alpha,
            beta: spec.train.beta,
            auc: r.auc,
            epochs_trained: r.epochs_trained,
            best_epoch: r.best_epoch,
            best_val_loss: r.best_val_loss,
            num_train: run.task.labeled_train_idx.len(),
            num_val: run.task.labeled_val_idx.len(),
            num_test: run.task.test_idx.len(),
        },
    )
}

fn write_rows(path: &Path, rows: &[experiment::CsvRow]) -> Result<(), CliError> {
    let mut bytes = Vec::new();
    experiment::write_csv(&mut bytes, rows).map_err(|e| CliError::Output(e.to_string()))?;
    Ok(io::write_file(path, &bytes)?)
}

fn report_failures(failures: &[experiment::SeedFailure]) {
    for f in failures {
        eprintln!("warning: seed {} failed and was excluded: {}", f.seed, f.error);
    }
}

fn cmd_experiment<W: Write>(args: &ExperimentArgs, out: &mut W) -> Result<(), CliError> {
    let cfg = load_config(args.flags.config.as_deref())?;
    let exp = experiment_config(&args.flags, &cfg, args.n_seeds, args.first_seed, args.allow_failures)?;
    let jobs = jobs(args.jobs, &cfg)?;
    let ds = load(&args.dataset)?;
    let summary = experiment::with_jobs(jobs, || run_experiment(&ds, &exp))?;
    report_failures(&summary.failures);
    if let Some(path) = &args.csv_out {
        write_rows(path, &csv_rows(&summary, None))?;
    }
    emit_json(out, &summary)
}

fn cmd_sweep<W: Write>(args: &SweepArgs, out: &mut W) -> Result<(), CliError> {
    let cfg = load_config(args.flags.config.as_deref())?;
    let param: SweepParam = args.param.parse().map_err(usage)?;
    let grid: Vec<f64> = parse_list("--grid", &args.grid)?;
    if grid.is_empty() {
        return Err(usage("--grid needs at least one value"));
    }
    let exp = experiment_config(&args.flags, &cfg, args.n_seeds, args.first_seed, args.allow_failures)?;
    let rates = match &args.label_rates {
        Some(text) => parse_list::<f64>("--label-rates", text)?,
        None => vec![exp.run.label_rate],
    };
    if let Some(r) = rates.iter().find(|r| !(**r > 0.0 && **r < 1.0)) {
        return Err(usage(format!("--label-rates: {r} is outside (0, 1)")));
    }
    for &v in &grid {
        let probe = match param {
            SweepParam::Alpha => gfcn_core::LossConfig::new(v, exp.run.train.beta),
            SweepParam::Beta => gfcn_core::LossConfig::new(exp.run.train.alpha, v),
        };
        probe.map_err(|e| usage(format!("--grid: {e}")))?;
    }
    let jobs = jobs(args.jobs, &cfg)?;
    let ds = load(&args.dataset)?;
    let table = experiment::with_jobs(jobs, || sensitivity_sweep(&ds, &rates, param, &grid, &exp))?;
    match &args.out {
        Some(path) => {
            write_rows(path, &table.rows)?;
            emit_json(out, &table.cells)
        }
        None => experiment::write_csv(out, &table.rows).map_err(|e| CliError::Output(e.to_string())),
    }
}

fn cmd_synth<W: Write>(args: &SynthArgs, out: &mut W) -> Result<(), CliError> {
    let gen = PlantedPartition {
        name: args.name.clone(),
        num_nodes: args.nodes,
        num_features: args.features,
        avg_degree: args.avg_degree,
        homophily: args.homophily,
        seed: args.seed,
        ..PlantedPartition::default()
    };
    let ds = gen.generate().map_err(|e| usage(e.to_string()))?;
    io::save_dataset(&args.out, &ds)?;
    cmd_info(&InfoArgs { dataset: args.out.clone() }, out)
}

/// Executes a parsed command, writing results to `out`.
pub fn run<W: Write>(cli: &Cli, out: &mut W) -> Result<(), CliError> {
    match &cli.command {
        Command::Info(a) => cmd_info(a, out),
        Command::Fair(a) => cmd_fair(a, out),
        Command::Train(a) => cmd_train(a, out),
        Command::Experiment(a) => cmd_experiment(a, out),
        Command::Sweep(a) => cmd_sweep(a, out),
        Command::Synth(a) => cmd_synth(a, out),
    }
}
