//! Graph fairing convolutional network and a plain GCN baseline.
//!
//! A GFCN layer replaces the fixed diagonal weights of one Jacobi fairing
//! step with learnable matrices and adds a nonlinearity:
//!
//! ```text
//! H⁽ˡ⁺¹⁾ = σ(S H⁽ˡ⁾ Θ⁽ˡ⁾ + X Θ̃⁽ˡ⁾),   H⁽⁰⁾ = X
//! ```
//!
//! The last layer uses the identity before a row-wise softmax; column 0 of
//! the output is the anomaly probability. Gradients are derived by hand for
//! this fixed computation graph.

use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::graph::{NormKind, NormalizedOperator, SparseGraph};
use crate::matrix::{CsrMatrix, DenseMatrix};

/// Lower clamp applied to probabilities before taking logarithms.
pub const PROB_EPS: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Activation {
    #[default]
    Relu,
    Identity,
}

impl Activation {
    #[inline]
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Relu => z.max(0.0),
            Activation::Identity => z,
        }
    }

    #[inline]
    fn derivative(self, z: f64) -> f64 {
        match self {
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Identity => 1.0,
        }
    }
}

/// Weighted cross-entropy settings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossConfig {
    /// Weight of the anomalous-class term.
    pub alpha: f64,
    /// L2 coefficient on every weight matrix.
    pub beta: f64,
}

impl LossConfig {
    pub fn new(alpha: f64, beta: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha.is_finite()) {
            return Err(Error::InvalidParameter(alloc::format!(
                "alpha must be positive, got {alpha}"
            )));
        }
        if !(beta >= 0.0 && beta.is_finite()) {
            return Err(Error::InvalidParameter(alloc::format!(
                "beta must be non-negative, got {beta}"
            )));
        }
        Ok(Self { alpha, beta })
    }
}

/// A set of weight matrices that can be optimized as a flat list.
pub trait Parameters: Clone {
    fn matrices(&self) -> Vec<&DenseMatrix>;
    fn matrices_mut(&mut self) -> Vec<&mut DenseMatrix>;

    /// Sum of squared Frobenius norms of all matrices.
    fn squared_norm(&self) -> f64 {
        self.matrices().iter().map(|m| m.squared_norm()).sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GfcnLayer {
    /// `F_ℓ × F_{ℓ+1}`, applied after aggregation over neighbors.
    pub theta: DenseMatrix,
    /// `F × F_{ℓ+1}`, applied to the input features.
    pub theta_skip: DenseMatrix,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GfcnParams {
    dims: Vec<usize>,
    layers: Vec<GfcnLayer>,
}

impl GfcnParams {
    /// Checks that layer shapes chain and that every skip matrix reads the
    /// input features.
    pub fn from_layers(layers: Vec<GfcnLayer>) -> Result<Self> {
        let first = layers
            .first()
            .ok_or_else(|| Error::InvalidParameter("a GFCN needs at least one layer".into()))?;
        let input = first.theta.rows();
        let mut dims = vec![input];
        for layer in &layers {
            let prev = *dims.last().unwrap();
            let out = layer.theta.cols();
            if layer.theta.rows() != prev {
                return Err(Error::DimensionMismatch {
                    op: "GfcnParams::theta",
                    expected: (prev, out),
                    found: layer.theta.shape(),
                });
            }
            if layer.theta_skip.shape() != (input, out) {
                return Err(Error::DimensionMismatch {
                    op: "GfcnParams::theta_skip",
                    expected: (input, out),
                    found: layer.theta_skip.shape(),
                });
            }
            dims.push(out);
        }
        Ok(Self { dims, layers })
    }

    /// `[F_0 = F, F_1, …, F_L]`.
    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn layers(&self) -> &[GfcnLayer] {
        &self.layers
    }

    pub fn num_layers(&self) -> usize {
        self.layers.len()
    }
}

impl Parameters for GfcnParams {
    fn matrices(&self) -> Vec<&DenseMatrix> {
        self.layers
            .iter()
            .flat_map(|l| [&l.theta, &l.theta_skip])
            .collect()
    }

    fn matrices_mut(&mut self) -> Vec<&mut DenseMatrix> {
        self.layers
            .iter_mut()
            .flat_map(|l| [&mut l.theta, &mut l.theta_skip])
            .collect()
    }
}

/// Weights of the GCN baseline, one matrix per layer.
#[derive(Debug, Clone, PartialEq)]
pub struct GcnParams {
    dims: Vec<usize>,
    weights: Vec<DenseMatrix>,
}

impl GcnParams {
    pub fn from_weights(weights: Vec<DenseMatrix>) -> Result<Self> {
        let first = weights
            .first()
            .ok_or_else(|| Error::InvalidParameter("a GCN needs at least one layer".into()))?;
        let mut dims = vec![first.rows()];
        for w in &weights {
            let prev = *dims.last().unwrap();
            if w.rows() != prev {
                return Err(Error::DimensionMismatch {
                    op: "GcnParams",
                    expected: (prev, w.cols()),
                    found: w.shape(),
                });
            }
            dims.push(w.cols());
        }
        Ok(Self { dims, weights })
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn weights(&self) -> &[DenseMatrix] {
        &self.weights
    }
}

impl Parameters for GcnParams {
    fn matrices(&self) -> Vec<&DenseMatrix> {
        self.weights.iter().collect()
    }

    fn matrices_mut(&mut self) -> Vec<&mut DenseMatrix> {
        self.weights.iter_mut().collect()
    }
}

fn check_dims(dims: &[usize]) -> Result<()> {
    if dims.len() < 2 {
        return Err(Error::InvalidParameter(
            "layer dimensions need an input and an output".into(),
        ));
    }
    if dims.contains(&0) {
        return Err(Error::InvalidParameter("layer dimensions must be positive".into()));
    }
    if *dims.last().unwrap() != 2 {
        return Err(Error::InvalidParameter(alloc::format!(
            "the output layer must have 2 units, got {}",
            dims.last().unwrap()
        )));
    }
    Ok(())
}

fn glorot(rng: &mut ChaCha8Rng, fan_in: usize, fan_out: usize) -> DenseMatrix {
    let bound = libm::sqrt(6.0 / (fan_in + fan_out) as f64);
    DenseMatrix::from_fn(fan_in, fan_out, |_, _| rng.gen_range(-bound..bound))
}

/// Glorot-uniform GFCN weights from a seeded ChaCha8 stream, generated
/// layer by layer (`Θ` then `Θ̃`), row-major.
pub fn init_params(dims: &[usize], skip_dim: usize, seed: u64) -> Result<GfcnParams> {
    check_dims(dims)?;
    if skip_dim != dims[0] {
        return Err(Error::InvalidParameter(alloc::format!(
            "skip matrices read the input features: skip_dim {skip_dim} != dims[0] {}",
            dims[0]
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let layers = dims
        .windows(2)
        .map(|w| GfcnLayer {
            theta: glorot(&mut rng, w[0], w[1]),
            theta_skip: glorot(&mut rng, skip_dim, w[1]),
        })
        .collect();
    GfcnParams::from_layers(layers)
}

/// Glorot-uniform GCN weights.
pub fn init_gcn_params(dims: &[usize], seed: u64) -> Result<GcnParams> {
    check_dims(dims)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let weights = dims.windows(2).map(|w| glorot(&mut rng, w[0], w[1])).collect();
    GcnParams::from_weights(weights)
}

/// Everything the backward pass needs from a forward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardCache {
    /// `Z⁽ˡ⁾` for each layer, before the activation.
    pub pre_activations: Vec<DenseMatrix>,
    /// `H⁽ˡ⁺¹⁾` for each layer; the last entry holds the output logits.
    pub activations: Vec<DenseMatrix>,
    /// Row-wise softmax of the logits; column 0 is the anomaly probability.
    pub probabilities: DenseMatrix,
    pub hidden_activation: Activation,
}

impl ForwardCache {
    pub fn logits(&self) -> &DenseMatrix {
        self.activations.last().expect("at least one layer")
    }

    /// Anomaly score per node (probability column 0).
    pub fn anomaly_scores(&self) -> Vec<f64> {
        self.probabilities.column(0)
    }
}

/// Row-wise softmax with max subtraction.
pub fn softmax_rows(z: &DenseMatrix) -> DenseMatrix {
    let mut out = z.clone();
    for i in 0..out.rows() {
        let row = out.row_mut(i);
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut total = 0.0;
        for v in row.iter_mut() {
            *v = libm::exp(*v - max);
            total += *v;
        }
        for v in row.iter_mut() {
            *v /= total;
        }
    }
    out
}

/// A differentiable node classifier over a fixed graph and feature matrix.
pub trait Network {
    type Params: Parameters;

    fn num_nodes(&self) -> usize;

    fn num_features(&self) -> usize;

    /// Fresh parameters for `[F, hidden…, 2]`.
    fn init_params(&self, hidden: &[usize], seed: u64) -> Result<Self::Params>;

    fn forward(&self, params: &Self::Params) -> Result<ForwardCache>;

    /// Gradient of [`loss`] with respect to every weight matrix.
    fn backward(
        &self,
        cache: &ForwardCache,
        params: &Self::Params,
        labels: &[u8],
        labeled: &[usize],
        cfg: &LossConfig,
    ) -> Result<Self::Params>;
}

fn full_dims(input: usize, hidden: &[usize]) -> Vec<usize> {
    let mut dims = Vec::with_capacity(hidden.len() + 2);
    dims.push(input);
    dims.extend_from_slice(hidden);
    dims.push(2);
    dims
}

fn check_features(n: usize, x: &DenseMatrix) -> Result<()> {
    if x.rows() != n {
        return Err(Error::DimensionMismatch {
            op: "features",
            expected: (n, x.cols()),
            found: x.shape(),
        });
    }
    Ok(())
}

/// GFCN bound to a graph and its input features.
#[derive(Debug, Clone)]
pub struct Gfcn {
    op: NormalizedOperator,
    features: CsrMatrix,
    activation: Activation,
}

impl Gfcn {
    pub fn new(g: &SparseGraph, x: &DenseMatrix) -> Result<Self> {
        Self::with_operator(g.normalize(NormKind::AdjacencyNorm), x)
    }

    /// Uses an already normalized adjacency operator.
    pub fn with_operator(op: NormalizedOperator, x: &DenseMatrix) -> Result<Self> {
        if op.kind() != NormKind::AdjacencyNorm {
            return Err(Error::InvalidParameter(
                "GFCN propagates with the normalized adjacency matrix".into(),
            ));
        }
        check_features(op.dim(), x)?;
        Ok(Self {
            op,
            features: CsrMatrix::from_dense(x),
            activation: Activation::Relu,
        })
    }

    /// Activation used on every layer except the last.
    pub fn with_activation(mut self, activation: Activation) -> Self {
        self.activation = activation;
        self
    }

    fn check_params(&self, params: &GfcnParams) -> Result<()> {
        if params.dims()[0] != self.features.cols() {
            return Err(Error::DimensionMismatch {
                op: "gfcn input",
                expected: (self.features.cols(), params.dims()[1]),
                found: (params.dims()[0], params.dims()[1]),
            });
        }
        Ok(())
    }
}

impl Network for Gfcn {
    type Params = GfcnParams;

    fn num_nodes(&self) -> usize {
        self.op.dim()
    }

    fn num_features(&self) -> usize {
        self.features.cols()
    }

    fn init_params(&self, hidden: &[usize], seed: u64) -> Result<GfcnParams> {
        let dims = full_dims(self.num_features(), hidden);
        init_params(&dims, dims[0], seed)
    }

    fn forward(&self, params: &GfcnParams) -> Result<ForwardCache> {
        self.check_params(params)?;
        let last = params.num_layers() - 1;
        let mut pre_activations = Vec::with_capacity(params.num_layers());
        let mut activations: Vec<DenseMatrix> = Vec::with_capacity(params.num_layers());
        for (l, layer) in params.layers().iter().enumerate() {
            let transformed = match l {
                0 => self.features.mul_dense(&layer.theta)?,
                _ => activations[l - 1].matmul(&layer.theta)?,
            };
            let mut z = self.op.spmm(&transformed)?;
            z.add_assign(&self.features.mul_dense(&layer.theta_skip)?)?;
            let act = if l == last {
                Activation::Identity
            } else {
                self.activation
            };
            activations.push(z.map(|v| act.apply(v)));
            pre_activations.push(z);
        }
        let probabilities = softmax_rows(activations.last().unwrap());
        Ok(ForwardCache {
            pre_activations,
            activations,
            probabilities,
            hidden_activation: self.activation,
        })
    }

    fn backward(
        &self,
        cache: &ForwardCache,
        params: &GfcnParams,
        labels: &[u8],
        labeled: &[usize],
        cfg: &LossConfig,
    ) -> Result<GfcnParams> {
        self.check_params(params)?;
        check_cache(cache, params.dims(), self.num_nodes())?;
        let mut upstream = output_gradient(&cache.probabilities, labels, labeled, cfg.alpha)?;
        let mut grads: Vec<GfcnLayer> = Vec::with_capacity(params.num_layers());
        for l in (0..params.num_layers()).rev() {
            let layer = &params.layers()[l];
            let mut d_skip = self.features.t_mul_dense(&upstream)?;
            // S is symmetric, so Sᵀ G = S G.
            let d_transformed = self.op.spmm(&upstream)?;
            let mut d_theta = match l {
                0 => self.features.t_mul_dense(&d_transformed)?,
                _ => cache.activations[l - 1].t_matmul(&d_transformed)?,
            };
            if l > 0 {
                let d_hidden = d_transformed.matmul_t(&layer.theta)?;
                upstream = mask_by_derivative(&d_hidden, &cache.pre_activations[l - 1], cache.hidden_activation);
            }
            d_theta.axpy(cfg.beta, &layer.theta)?;
            d_skip.axpy(cfg.beta, &layer.theta_skip)?;
            grads.push(GfcnLayer {
                theta: d_theta,
                theta_skip: d_skip,
            });
        }
        grads.reverse();
        GfcnParams::from_layers(grads)
    }
}

/// Forward pass of a ReLU GFCN over a precomputed `S`.
pub fn gfcn_forward(
    op_s: &NormalizedOperator,
    x: &DenseMatrix,
    params: &GfcnParams,
) -> Result<ForwardCache> {
    Gfcn::with_operator(op_s.clone(), x)?.forward(params)
}

/// GCN baseline: `H⁽ˡ⁺¹⁾ = σ(Â H⁽ˡ⁾ W⁽ˡ⁾)` with the renormalized adjacency `Â`.
#[derive(Debug, Clone)]
pub struct Gcn {
    op: NormalizedOperator,
    features: CsrMatrix,
    activation: Activation,
}

impl Gcn {
    pub fn new(g: &SparseGraph, x: &DenseMatrix) -> Result<Self> {
        Self::with_operator(g.normalize(NormKind::GcnRenorm), x)
    }

    pub fn with_operator(op: NormalizedOperator, x: &DenseMatrix) -> Result<Self> {
        if op.kind() != NormKind::GcnRenorm {
            return Err(Error::InvalidParameter(
                "GCN propagates with the renormalized adjacency matrix".into(),
            ));
        }
        check_features(op.dim(), x)?;
        Ok(Self {
            op,
            features: CsrMatrix::from_dense(x),
            activation: Activation::Relu,
        })
    }

    fn check_params(&self, params: &GcnParams) -> Result<()> {
        if params.dims()[0] != self.features.cols() {
            return Err(Error::DimensionMismatch {
                op: "gcn input",
                expected: (self.features.cols(), params.dims()[1]),
                found: (params.dims()[0], params.dims()[1]),
            });
        }
        Ok(())
    }
}

impl Network for Gcn {
    type Params = GcnParams;

    fn num_nodes(&self) -> usize {
        self.op.dim()
    }

    fn num_features(&self) -> usize {
        self.features.cols()
    }

    fn init_params(&self, hidden: &[usize], seed: u64) -> Result<GcnParams> {
        init_gcn_params(&full_dims(self.num_features(), hidden), seed)
    }

    fn forward(&self, params: &GcnParams) -> Result<ForwardCache> {
        self.check_params(params)?;
        let last = params.weights().len() - 1;
        let mut pre_activations = Vec::with_capacity(last + 1);
        let mut activations: Vec<DenseMatrix> = Vec::with_capacity(last + 1);
        for (l, w) in params.weights().iter().enumerate() {
            let transformed = match l {
                0 => self.features.mul_dense(w)?,
                _ => activations[l - 1].matmul(w)?,
            };
            let z = self.op.spmm(&transformed)?;
            let act = if l == last {
                Activation::Identity
            } else {
                self.activation
            };
            activations.push(z.map(|v| act.apply(v)));
            pre_activations.push(z);
        }
        let probabilities = softmax_rows(activations.last().unwrap());
        Ok(ForwardCache {
            pre_activations,
            activations,
            probabilities,
            hidden_activation: self.activation,
        })
    }

    fn backward(
        &self,
        cache: &ForwardCache,
        params: &GcnParams,
        labels: &[u8],
        labeled: &[usize],
        cfg: &LossConfig,
    ) -> Result<GcnParams> {
        self.check_params(params)?;
        check_cache(cache, params.dims(), self.num_nodes())?;
        let mut upstream = output_gradient(&cache.probabilities, labels, labeled, cfg.alpha)?;
        let mut grads = Vec::with_capacity(params.weights().len());
        for l in (0..params.weights().len()).rev() {
            let w = &params.weights()[l];
            let d_transformed = self.op.spmm(&upstream)?;
            let mut d_w = match l {
                0 => self.features.t_mul_dense(&d_transformed)?,
                _ => cache.activations[l - 1].t_matmul(&d_transformed)?,
            };
            if l > 0 {
                let d_hidden = d_transformed.matmul_t(w)?;
                upstream = mask_by_derivative(&d_hidden, &cache.pre_activations[l - 1], cache.hidden_activation);
            }
            d_w.axpy(cfg.beta, w)?;
            grads.push(d_w);
        }
        grads.reverse();
        GcnParams::from_weights(grads)
    }
}

/// Forward pass of the two-layer-style GCN baseline over a precomputed `Â`.
pub fn gcn_forward(
    op: &NormalizedOperator,
    x: &DenseMatrix,
    params: &GcnParams,
) -> Result<ForwardCache> {
    Gcn::with_operator(op.clone(), x)?.forward(params)
}

fn check_cache(cache: &ForwardCache, dims: &[usize], n: usize) -> Result<()> {
    let layers = dims.len() - 1;
    if cache.activations.len() != layers || cache.pre_activations.len() != layers {
        return Err(Error::InvalidParameter(alloc::format!(
            "stale forward cache: {} layers cached, parameters have {layers}",
            cache.activations.len()
        )));
    }
    for (l, z) in cache.pre_activations.iter().enumerate() {
        if z.shape() != (n, dims[l + 1]) {
            return Err(Error::DimensionMismatch {
                op: "stale forward cache",
                expected: (n, dims[l + 1]),
                found: z.shape(),
            });
        }
    }
    Ok(())
}

fn mask_by_derivative(grad: &DenseMatrix, pre: &DenseMatrix, act: Activation) -> DenseMatrix {
    let mut out = grad.clone();
    for (g, &z) in out.as_mut_slice().iter_mut().zip(pre.as_slice()) {
        *g *= act.derivative(z);
    }
    out
}

fn check_targets(probs: &DenseMatrix, labels: &[u8], labeled: &[usize]) -> Result<()> {
    if labeled.is_empty() {
        return Err(Error::EmptyLabeledSet);
    }
    if probs.cols() != 2 {
        return Err(Error::InvalidParameter(alloc::format!(
            "the loss expects 2 output columns, got {}",
            probs.cols()
        )));
    }
    if labels.len() != probs.rows() {
        return Err(Error::DimensionMismatch {
            op: "labels",
            expected: (probs.rows(), 1),
            found: (labels.len(), 1),
        });
    }
    if let Some(&i) = labeled.iter().find(|&&i| i >= probs.rows()) {
        return Err(Error::InvalidParameter(alloc::format!(
            "labeled index {i} out of range"
        )));
    }
    Ok(())
}

/// Mean weighted cross-entropy over the labeled nodes, without the
/// regularizer.
pub fn data_loss(probs: &DenseMatrix, labels: &[u8], labeled: &[usize], alpha: f64) -> Result<f64> {
    check_targets(probs, labels, labeled)?;
    let total: f64 = labeled
        .iter()
        .map(|&i| {
            let p = probs.get(i, 0).clamp(PROB_EPS, 1.0 - PROB_EPS);
            let q = probs.get(i, 1).clamp(PROB_EPS, 1.0 - PROB_EPS);
            if labels[i] == 1 {
                -alpha * libm::log(p)
            } else {
                -libm::log(q)
            }
        })
        .sum();
    Ok(total / labeled.len() as f64)
}

/// Regularized weighted cross-entropy:
/// `(1/N_l) Σ [−α y log ŷ − (1−y) log(1−ŷ)] + (β/2) Σ ‖W‖²_F`.
pub fn loss<P: Parameters>(
    cache: &ForwardCache,
    labels: &[u8],
    labeled: &[usize],
    cfg: &LossConfig,
    params: &P,
) -> Result<f64> {
    let data = data_loss(&cache.probabilities, labels, labeled, cfg.alpha)?;
    Ok(data + 0.5 * cfg.beta * params.squared_norm())
}

/// `∂(data loss)/∂logits` for the two-class softmax head.
fn output_gradient(
    probs: &DenseMatrix,
    labels: &[u8],
    labeled: &[usize],
    alpha: f64,
) -> Result<DenseMatrix> {
    check_targets(probs, labels, labeled)?;
    let scale = 1.0 / labeled.len() as f64;
    let mut grad = DenseMatrix::zeros(probs.rows(), 2);
    for &i in labeled {
        let (p, q) = (probs.get(i, 0), probs.get(i, 1));
        // Clamped log terms are flat outside [eps, 1 - eps].
        let g = if labels[i] == 1 {
            if p < PROB_EPS || p > 1.0 - PROB_EPS {
                0.0
            } else {
                -alpha * q
            }
        } else if q < PROB_EPS || q > 1.0 - PROB_EPS {
            0.0
        } else {
            p
        };
        grad.set(i, 0, grad.get(i, 0) + scale * g);
        grad.set(i, 1, grad.get(i, 1) - scale * g);
    }
    Ok(grad)
}
