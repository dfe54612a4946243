//! Multi-seed experiments and hyperparameter sensitivity sweeps.

use std::io::Write;
use std::str::FromStr;

use gfcn_core::metrics::{mean, sample_std};
use gfcn_core::model::{Gcn, Gfcn, Parameters};
use gfcn_core::optim::train_network;
use gfcn_core::task::make_anomaly_task;
use gfcn_core::{AnomalyTask, Dataset, DenseMatrix, GcnParams, GfcnParams, LabelMode, RunResult, TrainConfig};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    #[default]
    Gfcn,
    Gcn,
}

impl ModelKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::Gfcn => "gfcn",
            ModelKind::Gcn => "gcn",
        }
    }
}

impl FromStr for ModelKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "gfcn" => Ok(ModelKind::Gfcn),
            "gcn" => Ok(ModelKind::Gcn),
            other => Err(format!("unknown model {other:?}, expected gfcn or gcn")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum TrainedParams {
    Gfcn(GfcnParams),
    Gcn(GcnParams),
}

impl TrainedParams {
    pub fn dims(&self) -> &[usize] {
        match self {
            TrainedParams::Gfcn(p) => p.dims(),
            TrainedParams::Gcn(p) => p.dims(),
        }
    }

    pub fn num_layers(&self) -> usize {
        self.dims().len() - 1
    }

    /// Weight matrices in layer order (`Θ` then `Θ̃` per GFCN layer).
    pub fn matrices(&self) -> Vec<&DenseMatrix> {
        match self {
            TrainedParams::Gfcn(p) => p.matrices(),
            TrainedParams::Gcn(p) => p.matrices(),
        }
    }
}

/// One training run's settings; the seed is `train.seed`.
#[derive(Debug, Clone, PartialEq)]
pub struct RunSpec {
    pub label_rate: f64,
    pub label_mode: LabelMode,
    pub model: ModelKind,
    pub train: TrainConfig,
}

impl Default for RunSpec {
    fn default() -> Self {
        Self {
            label_rate: 0.05,
            label_mode: LabelMode::NormalOnly,
            model: ModelKind::Gfcn,
            train: TrainConfig::default(),
        }
    }
}

pub struct RunOutput {
    pub task: AnomalyTask,
    pub params: TrainedParams,
    pub result: RunResult,
}

/// Builds the task for `spec.train.seed` and trains one model on it.
pub fn run_once(ds: &Dataset, spec: &RunSpec) -> gfcn_core::Result<RunOutput> {
    let task = make_anomaly_task(ds, spec.label_rate, spec.train.seed, spec.label_mode)?;
    let (params, result) = match spec.model {
        ModelKind::Gfcn => {
            let net = Gfcn::new(&ds.graph, &ds.features)?;
            let (p, r) = train_network(&net, &task, &spec.train)?;
            (TrainedParams::Gfcn(p), r)
        }
        ModelKind::Gcn => {
            let net = Gcn::new(&ds.graph, &ds.features)?;
            let (p, r) = train_network(&net, &task, &spec.train)?;
            (TrainedParams::Gcn(p), r)
        }
    };
    Ok(RunOutput { task, params, result })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub run: RunSpec,
    pub seeds: Vec<u64>,
    /// Drop failed seeds from the aggregate instead of failing the whole
    /// experiment.
    pub allow_failures: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            run: RunSpec::default(),
            seeds: (0..10).collect(),
            allow_failures: false,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ExperimentError {
    #[error("seed {seed}: {source}")]
    Seed {
        seed: u64,
        #[source]
        source: gfcn_core::Error,
    },

    #[error("every seed failed; first failure: seed {seed}: {message}")]
    AllFailed { seed: u64, message: String },

    #[error("{0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub seed: u64,
    pub auc: f64,
    pub epochs_trained: usize,
    pub best_epoch: usize,
    pub best_val_loss: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedFailure {
    pub seed: u64,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSummary {
    pub dataset: String,
    pub model: ModelKind,
    pub label_rate: f64,
    pub label_mode: String,
    pub alpha: f64,
    pub beta: f64,
    pub mean_auc: f64,
    pub std_auc: f64,
    /// `mean±std` in percent with one decimal.
    pub table_cell: String,
    pub runs: Vec<RunSummary>,
    pub failures: Vec<SeedFailure>,
}

impl ExperimentSummary {
    pub fn aucs(&self) -> Vec<f64> {
        self.runs.iter().map(|r| r.auc).collect()
    }
}

fn summarize_run(ds: &Dataset, spec: &RunSpec) -> gfcn_core::Result<RunSummary> {
    let out = run_once(ds, spec)?;
    let r = out.result;
    Ok(RunSummary {
        seed: r.seed,
        auc: r.auc.ok_or(gfcn_core::Error::SingleClass)?,
        epochs_trained: r.epochs_trained,
        best_epoch: r.best_epoch,
        best_val_loss: r.best_val_loss,
    })
}

/// Runs every seed in parallel on the current rayon pool and aggregates
/// test AUCs. Results are ordered by seed list position, independent of
/// completion order.
pub fn run_experiment(ds: &Dataset, cfg: &ExperimentConfig) -> Result<ExperimentSummary, ExperimentError> {
    if cfg.seeds.is_empty() {
        return Err(ExperimentError::Invalid("an experiment needs at least one seed".into()));
    }
    let outcomes: Vec<(u64, gfcn_core::Result<RunSummary>)> = cfg
        .seeds
        .par_iter()
        .map(|&seed| {
            let spec = RunSpec {
                train: TrainConfig {
                    seed,
                    ..cfg.run.train.clone()
                },
                ..cfg.run.clone()
            };
            (seed, summarize_run(ds, &spec))
        })
        .collect();

    let mut runs = Vec::new();
    let mut failures = Vec::new();
    let mut first_error = None;
    for (seed, outcome) in outcomes {
        match outcome {
            Ok(run) => runs.push(run),
            Err(e) => {
                failures.push(SeedFailure {
                    seed,
                    error: e.to_string(),
                });
                first_error.get_or_insert((seed, e));
            }
        }
    }
    if let Some((seed, source)) = first_error {
        if !cfg.allow_failures {
            return Err(ExperimentError::Seed { seed, source });
        }
        if runs.is_empty() {
            return Err(ExperimentError::AllFailed {
                seed,
                message: source.to_string(),
            });
        }
    }

    let aucs: Vec<f64> = runs.iter().map(|r| r.auc).collect();
    let (m, s) = (mean(&aucs), sample_std(&aucs));
    Ok(ExperimentSummary {
        dataset: ds.name.clone(),
        model: cfg.run.model,
        label_rate: cfg.run.label_rate,
        label_mode: cfg.run.label_mode.as_str().to_string(),
        alpha: cfg.run.train.alpha,
        beta: cfg.run.train.beta,
        mean_auc: m,
        std_auc: s,
        table_cell: format!("{:.1}±{:.1}", 100.0 * m, 100.0 * s),
        runs,
        failures,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SweepParam {
    Alpha,
    Beta,
}

impl SweepParam {
    pub fn as_str(self) -> &'static str {
        match self {
            SweepParam::Alpha => "alpha",
            SweepParam::Beta => "beta",
        }
    }

    fn apply(self, cfg: &TrainConfig, value: f64) -> TrainConfig {
        match self {
            SweepParam::Alpha => TrainConfig {
                alpha: value,
                ..cfg.clone()
            },
            SweepParam::Beta => TrainConfig {
                beta: value,
                ..cfg.clone()
            },
        }
    }
}

impl FromStr for SweepParam {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "alpha" => Ok(SweepParam::Alpha),
            "beta" => Ok(SweepParam::Beta),
            other => Err(format!("unknown sweep parameter {other:?}, expected alpha or beta")),
        }
    }
}

/// One line of the per-seed results table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CsvRow {
    pub dataset: String,
    pub label_rate: f64,
    pub param: String,
    pub value: Option<f64>,
    pub seed: u64,
    pub auc: f64,
    pub epochs: usize,
}

/// Per-seed rows of `summary`; `param` names the swept hyperparameter, or
/// `none` with an empty value for a plain experiment.
pub fn csv_rows(summary: &ExperimentSummary, param: Option<SweepParam>) -> Vec<CsvRow> {
    let value = param.map(|p| match p {
        SweepParam::Alpha => summary.alpha,
        SweepParam::Beta => summary.beta,
    });
    summary
        .runs
        .iter()
        .map(|r| CsvRow {
            dataset: summary.dataset.clone(),
            label_rate: summary.label_rate,
            param: param.map_or("none", SweepParam::as_str).to_string(),
            value,
            seed: r.seed,
            auc: r.auc,
            epochs: r.epochs_trained,
        })
        .collect()
}

pub fn write_csv<W: Write>(out: W, rows: &[CsvRow]) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepCell {
    pub label_rate: f64,
    pub param: SweepParam,
    pub value: f64,
    pub mean_auc: f64,
    pub std_auc: f64,
    pub num_runs: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepTable {
    pub dataset: String,
    pub cells: Vec<SweepCell>,
    pub rows: Vec<CsvRow>,
}

impl SweepTable {
    /// Cell with the highest mean AUC at `label_rate`.
    pub fn best_at(&self, label_rate: f64) -> Option<&SweepCell> {
        self.cells
            .iter()
            .filter(|c| c.label_rate == label_rate)
            .max_by(|a, b| a.mean_auc.total_cmp(&b.mean_auc))
    }
}

/// One experiment per `(rate, value)` cell. Every cell uses the same seeds,
/// so cells are paired comparisons.
pub fn sensitivity_sweep(
    ds: &Dataset,
    rates: &[f64],
    param: SweepParam,
    grid: &[f64],
    cfg: &ExperimentConfig,
) -> Result<SweepTable, ExperimentError> {
    if grid.is_empty() || rates.is_empty() {
        return Err(ExperimentError::Invalid(
            "a sweep needs at least one grid value and one label rate".into(),
        ));
    }
    let mut cells = Vec::with_capacity(rates.len() * grid.len());
    let mut rows = Vec::new();
    for &rate in rates {
        for &value in grid {
            let cell_cfg = ExperimentConfig {
                run: RunSpec {
                    label_rate: rate,
                    train: param.apply(&cfg.run.train, value),
                    ..cfg.run.clone()
                },
                ..cfg.clone()
            };
            let summary = run_experiment(ds, &cell_cfg)?;
            rows.extend(csv_rows(&summary, Some(param)));
            cells.push(SweepCell {
                label_rate: rate,
                param,
                value,
                mean_auc: summary.mean_auc,
                std_auc: summary.std_auc,
                num_runs: summary.runs.len(),
            });
        }
    }
    Ok(SweepTable {
        dataset: ds.name.clone(),
        cells,
        rows,
    })
}

/// Runs `f` on a rayon pool with `jobs` threads, or on the global pool.
pub fn with_jobs<T: Send>(jobs: Option<usize>, f: impl FnOnce() -> T + Send) -> T {
    match jobs {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .expect("thread pool")
            .install(f),
        None => f(),
    }
}
