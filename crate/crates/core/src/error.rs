use alloc::string::String;

use crate::fairing::SolveReport;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("edge ({u}, {v}) at position {position} is out of range for {num_nodes} nodes")]
    EdgeOutOfRange {
        position: usize,
        u: usize,
        v: usize,
        num_nodes: usize,
    },

    #[error("{op}: dimension mismatch, expected {expected:?}, found {found:?}")]
    DimensionMismatch {
        op: &'static str,
        expected: (usize, usize),
        found: (usize, usize),
    },

    #[error("matrix contains a non-finite entry at ({row}, {col})")]
    NonFinite { row: usize, col: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("solver did not converge after {} iterations (relative residual {:e})", .0.iterations, .0.final_residual)]
    NotConverged(SolveReport),

    #[error("the labeled set is empty")]
    EmptyLabeledSet,

    #[error("non-finite loss {loss} at epoch {epoch}")]
    NonFiniteLoss { epoch: usize, loss: f64 },

    #[error("AUC is undefined when only one class is present")]
    SingleClass,
}
