//! Adam, full-batch training with early stopping, and hyperparameter search.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::graph::SparseGraph;
use crate::matrix::DenseMatrix;
use crate::metrics;
use crate::model::{self, Gfcn, GfcnParams, LossConfig, Network, Parameters};
use crate::task::AnomalyTask;

/// Offset mixed into the run seed for weight initialization, so the
/// initializer and the label sampler never share a stream.
const INIT_SEED_OFFSET: u64 = 0x9E37_79B9_7F4A_7C15;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub max_epochs: usize,
    /// Stop after this many consecutive epochs without a new best
    /// validation loss.
    pub patience: usize,
    pub alpha: f64,
    pub beta: f64,
    pub seed: u64,
    /// Hidden layer widths; the output layer always has 2 units.
    pub hidden: Vec<usize>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.05,
            max_epochs: 100,
            patience: 10,
            alpha: 4.0,
            beta: 0.01,
            seed: 0,
            hidden: vec![64],
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<LossConfig> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::InvalidParameter(alloc::format!(
                "learning rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if self.patience == 0 {
            return Err(Error::InvalidParameter("patience must be at least 1".into()));
        }
        if self.hidden.contains(&0) {
            return Err(Error::InvalidParameter("hidden widths must be positive".into()));
        }
        LossConfig::new(self.alpha, self.beta)
    }
}

/// Adam moment estimates for a list of weight matrices.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub first_moment: Vec<DenseMatrix>,
    pub second_moment: Vec<DenseMatrix>,
    pub step: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl AdamState {
    pub fn new<P: Parameters>(params: &P) -> Self {
        let zeros: Vec<DenseMatrix> = params
            .matrices()
            .iter()
            .map(|m| DenseMatrix::zeros(m.rows(), m.cols()))
            .collect();
        Self {
            first_moment: zeros.clone(),
            second_moment: zeros,
            step: 0,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// One bias-corrected Adam update, applied in place.
pub fn adam_step<P: Parameters>(
    params: &mut P,
    grads: &P,
    state: &mut AdamState,
    lr: f64,
) -> Result<()> {
    let grads = grads.matrices();
    let mut weights = params.matrices_mut();
    if grads.len() != weights.len() || state.first_moment.len() != weights.len() {
        return Err(Error::InvalidParameter(alloc::format!(
            "adam: {} weight matrices, {} gradients, {} moment slots",
            weights.len(),
            grads.len(),
            state.first_moment.len()
        )));
    }
    for (k, (w, g)) in weights.iter().zip(&grads).enumerate() {
        let expected = state.first_moment[k].shape();
        for found in [w.shape(), g.shape()] {
            if found != expected {
                return Err(Error::DimensionMismatch {
                    op: "adam_step",
                    expected,
                    found,
                });
            }
        }
    }

    state.step += 1;
    let t = state.step as f64;
    let (b1, b2, eps) = (state.beta1, state.beta2, state.epsilon);
    let step_size = lr / (1.0 - libm::pow(b1, t));
    let bias2_sqrt = libm::sqrt(1.0 - libm::pow(b2, t));
    for (k, (w, g)) in weights.iter_mut().zip(&grads).enumerate() {
        let m = state.first_moment[k].as_mut_slice();
        let v = state.second_moment[k].as_mut_slice();
        for (((wi, &gi), mi), vi) in w.as_mut_slice().iter_mut().zip(g.as_slice()).zip(m).zip(v) {
            *mi = b1 * *mi + (1.0 - b1) * gi;
            *vi = b2 * *vi + (1.0 - b2) * gi * gi;
            *wi -= step_size * *mi / (libm::sqrt(*vi) / bias2_sqrt + eps);
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Regularized training loss before this epoch's update.
    pub train_loss: f64,
    /// Monitored loss after the update.
    pub val_loss: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunResult {
    pub seed: u64,
    /// Test AUC of the returned parameters; `None` when the test set holds a
    /// single class.
    pub auc: Option<f64>,
    pub epochs_trained: usize,
    /// Epoch whose parameters were kept (0 = initialization).
    pub best_epoch: usize,
    pub best_val_loss: f64,
    pub history: Vec<EpochRecord>,
}

/// Loss used for early stopping and model selection: unweighted mean
/// cross-entropy over the validation nodes, or over the training nodes when
/// the validation split is empty.
fn monitored_loss(probs: &DenseMatrix, task: &AnomalyTask) -> Result<f64> {
    let idx = if task.labeled_val_idx.is_empty() {
        &task.labeled_train_idx
    } else {
        &task.labeled_val_idx
    };
    model::data_loss(probs, &task.binary_labels, idx, 1.0)
}

/// Test-set AUC of the anomaly probabilities in `probs`.
pub fn test_auc(probs: &DenseMatrix, task: &AnomalyTask) -> Result<Option<f64>> {
    let scores: Vec<f64> = task.test_idx.iter().map(|&i| probs.get(i, 0)).collect();
    let labels: Vec<u8> = task.test_idx.iter().map(|&i| task.binary_labels[i]).collect();
    match metrics::auc(&scores, &labels) {
        Ok(a) => Ok(Some(a)),
        Err(Error::SingleClass) => Ok(None),
        Err(e) => Err(e),
    }
}

/// Full-batch training of any [`Network`].
///
/// Each epoch runs forward, the regularized loss on the training nodes,
/// backward and one Adam step, then measures the monitored loss. Training
/// stops after `max_epochs` or `patience` epochs without improvement; the
/// parameters with the lowest monitored loss are returned.
pub fn train_network<N: Network>(
    net: &N,
    task: &AnomalyTask,
    cfg: &TrainConfig,
) -> Result<(N::Params, RunResult)> {
    let loss_cfg = cfg.validate()?;
    if task.labeled_train_idx.is_empty() {
        return Err(Error::EmptyLabeledSet);
    }
    if task.num_nodes() != net.num_nodes() {
        return Err(Error::DimensionMismatch {
            op: "train",
            expected: (net.num_nodes(), 1),
            found: (task.num_nodes(), 1),
        });
    }
    let labels = &task.binary_labels;
    let train_idx = &task.labeled_train_idx;

    let mut params = net.init_params(&cfg.hidden, cfg.seed.wrapping_add(INIT_SEED_OFFSET))?;
    let mut state = AdamState::new(&params);
    let mut cache = net.forward(&params)?;

    let mut best_loss = monitored_loss(&cache.probabilities, task)?;
    let mut best_params = params.clone();
    let mut best_probs = cache.probabilities.clone();
    let mut best_epoch = 0;
    let mut since_best = 0;
    let mut history = Vec::with_capacity(cfg.max_epochs);

    for epoch in 1..=cfg.max_epochs {
        let train_loss = model::loss(&cache, labels, train_idx, &loss_cfg, &params)?;
        if !train_loss.is_finite() {
            return Err(Error::NonFiniteLoss {
                epoch,
                loss: train_loss,
            });
        }
        let grads = net.backward(&cache, &params, labels, train_idx, &loss_cfg)?;
        adam_step(&mut params, &grads, &mut state, cfg.learning_rate)?;
        cache = net.forward(&params)?;
        let val_loss = monitored_loss(&cache.probabilities, task)?;
        if !val_loss.is_finite() {
            return Err(Error::NonFiniteLoss {
                epoch,
                loss: val_loss,
            });
        }
        history.push(EpochRecord {
            epoch,
            train_loss,
            val_loss,
        });
        if val_loss < best_loss {
            best_loss = val_loss;
            best_params = params.clone();
            best_probs = cache.probabilities.clone();
            best_epoch = epoch;
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= cfg.patience {
                break;
            }
        }
    }

    let result = RunResult {
        seed: cfg.seed,
        auc: test_auc(&best_probs, task)?,
        epochs_trained: history.len(),
        best_epoch,
        best_val_loss: best_loss,
        history,
    };
    Ok((best_params, result))
}

/// Trains a GFCN on `features` over `graph`.
pub fn train(
    graph: &SparseGraph,
    features: &DenseMatrix,
    task: &AnomalyTask,
    cfg: &TrainConfig,
) -> Result<(GfcnParams, RunResult)> {
    let net = Gfcn::new(graph, features)?;
    train_network(&net, task, cfg)
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridCell {
    pub alpha: f64,
    pub beta: f64,
    pub val_loss: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridSearchResult {
    pub alpha: f64,
    pub beta: f64,
    pub cells: Vec<GridCell>,
}

/// Picks the cell with the lowest validation loss; ties go to the smaller
/// beta, then the smaller alpha.
pub fn select_best(cells: &[GridCell]) -> Option<&GridCell> {
    cells.iter().min_by(|a, b| {
        a.val_loss
            .total_cmp(&b.val_loss)
            .then(a.beta.total_cmp(&b.beta))
            .then(a.alpha.total_cmp(&b.alpha))
    })
}

/// Trains one model per `(alpha, beta)` pair and selects by validation loss.
pub fn grid_search<N: Network>(
    net: &N,
    task: &AnomalyTask,
    alphas: &[f64],
    betas: &[f64],
    cfg: &TrainConfig,
) -> Result<GridSearchResult> {
    if alphas.is_empty() || betas.is_empty() {
        return Err(Error::InvalidParameter("grid search needs non-empty grids".into()));
    }
    let mut cells = Vec::with_capacity(alphas.len() * betas.len());
    for &alpha in alphas {
        for &beta in betas {
            let cell_cfg = TrainConfig {
                alpha,
                beta,
                ..cfg.clone()
            };
            let (_, result) = train_network(net, task, &cell_cfg)?;
            cells.push(GridCell {
                alpha,
                beta,
                val_loss: result.best_val_loss,
            });
        }
    }
    let best = select_best(&cells).expect("non-empty grid").clone();
    Ok(GridSearchResult {
        alpha: best.alpha,
        beta: best.beta,
        cells,
    })
}
