//! Sparse graph learning primitives for semi-supervised node anomaly detection.
//!
//! The crate is `no_std` (it needs `alloc`) and contains only pure numerical
//! code: CSR graph kernels, the implicit fairing low-pass filter with direct
//! and Jacobi solvers, the graph fairing convolutional network (GFCN) with a
//! hand-written backward pass, a GCN baseline, Adam, the training loop,
//! anomaly-task construction and rank-based AUC. File formats, experiment
//! orchestration and the command line live in the `gfcn` crate.

#![no_std]

extern crate alloc;

mod error;

pub mod fairing;
pub mod graph;
pub mod matrix;
pub mod metrics;
pub mod model;
pub mod optim;
pub mod synth;
pub mod task;

pub use error::{Error, Result};
pub use fairing::{FairingConfig, SolveReport};
pub use graph::{NormKind, NormalizedOperator, SparseGraph};
pub use matrix::{CsrMatrix, DenseMatrix};
pub use model::{Activation, ForwardCache, GcnParams, GfcnParams, LossConfig};
pub use optim::{AdamState, EpochRecord, RunResult, TrainConfig};
pub use task::{AnomalyTask, Dataset, LabelMode};
