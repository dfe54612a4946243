//! Undirected graphs in CSR form and their normalized operators.

use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::matrix::{CsrMatrix, DenseMatrix};

/// Undirected, unweighted-by-default graph stored as a symmetric CSR matrix.
///
/// Invariants: symmetric, no self-loops, strictly increasing columns per
/// row, all values finite and positive.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseGraph {
    adjacency: CsrMatrix,
}

impl SparseGraph {
    /// Builds a binary graph from an edge list.
    ///
    /// Each pair is stored in both directions, self-loops are dropped and
    /// repeated pairs collapse to a single entry of weight 1.
    pub fn from_edges(num_nodes: usize, edges: &[(usize, usize)]) -> Result<Self> {
        let mut pairs = Vec::with_capacity(2 * edges.len());
        for (position, &(u, v)) in edges.iter().enumerate() {
            if u >= num_nodes || v >= num_nodes {
                return Err(Error::EdgeOutOfRange {
                    position,
                    u,
                    v,
                    num_nodes,
                });
            }
            if u != v {
                pairs.push((u, v));
                pairs.push((v, u));
            }
        }
        pairs.sort_unstable();
        pairs.dedup();

        let mut row_offsets = Vec::with_capacity(num_nodes + 1);
        let mut col_indices = Vec::with_capacity(pairs.len());
        row_offsets.push(0);
        let mut next = 0;
        for row in 0..num_nodes {
            while next < pairs.len() && pairs[next].0 == row {
                col_indices.push(pairs[next].1);
                next += 1;
            }
            row_offsets.push(col_indices.len());
        }
        let values = alloc::vec![1.0; col_indices.len()];
        Ok(Self {
            adjacency: CsrMatrix::from_parts_unchecked(
                num_nodes,
                num_nodes,
                row_offsets,
                col_indices,
                values,
            ),
        })
    }

    /// Graph with `n` nodes and no edges.
    pub fn empty(n: usize) -> Self {
        Self::from_edges(n, &[]).expect("no edges to validate")
    }

    #[inline]
    pub fn num_nodes(&self) -> usize {
        self.adjacency.rows()
    }

    /// Number of stored entries (twice the number of undirected edges).
    #[inline]
    pub fn nnz(&self) -> usize {
        self.adjacency.nnz()
    }

    #[inline]
    pub fn num_edges(&self) -> usize {
        self.nnz() / 2
    }

    pub fn adjacency(&self) -> &CsrMatrix {
        &self.adjacency
    }

    pub fn row_offsets(&self) -> &[usize] {
        self.adjacency.row_offsets()
    }

    pub fn col_indices(&self) -> &[usize] {
        self.adjacency.col_indices()
    }

    pub fn values(&self) -> &[f64] {
        self.adjacency.values()
    }

    pub fn neighbors(&self, i: usize) -> &[usize] {
        self.adjacency.row(i).0
    }

    /// Row sums of the adjacency matrix.
    pub fn degrees(&self) -> Vec<f64> {
        (0..self.num_nodes())
            .map(|i| self.adjacency.row(i).1.iter().sum())
            .collect()
    }

    /// Each undirected edge once, as `(u, v)` with `u < v`, in row order.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (0..self.num_nodes()).flat_map(move |u| {
            self.neighbors(u)
                .iter()
                .copied()
                .filter(move |&v| v > u)
                .map(move |v| (u, v))
        })
    }

    /// Normalized operator of the requested kind; see [`NormKind`].
    pub fn normalize(&self, kind: NormKind) -> NormalizedOperator {
        normalize(self, kind)
    }
}

/// Which normalization of the adjacency matrix to build.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NormKind {
    /// `S = D^{-1/2} A D^{-1/2}`.
    AdjacencyNorm,
    /// `L = I - S`.
    LaplacianNorm,
    /// `D̃^{-1/2} (A + I) D̃^{-1/2}` with `D̃` the degrees of `A + I`.
    GcnRenorm,
}

/// A normalized square sparse operator derived from a [`SparseGraph`].
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizedOperator {
    kind: NormKind,
    matrix: CsrMatrix,
}

impl NormalizedOperator {
    pub fn kind(&self) -> NormKind {
        self.kind
    }

    pub fn matrix(&self) -> &CsrMatrix {
        &self.matrix
    }

    pub fn dim(&self) -> usize {
        self.matrix.rows()
    }

    /// Sparse-dense product `op · h`.
    pub fn spmm(&self, h: &DenseMatrix) -> Result<DenseMatrix> {
        self.matrix.mul_dense(h)
    }
}

/// `d^{-1/2}`, with isolated nodes mapped to 0.
fn inv_sqrt(d: f64) -> f64 {
    if d > 0.0 {
        1.0 / libm::sqrt(d)
    } else {
        0.0
    }
}

pub fn normalize(g: &SparseGraph, kind: NormKind) -> NormalizedOperator {
    let n = g.num_nodes();
    let a = g.adjacency();
    let with_diagonal = !matches!(kind, NormKind::AdjacencyNorm);
    let scale: Vec<f64> = match kind {
        NormKind::GcnRenorm => g.degrees().into_iter().map(|d| inv_sqrt(d + 1.0)).collect(),
        _ => g.degrees().into_iter().map(inv_sqrt).collect(),
    };

    let cap = a.nnz() + if with_diagonal { n } else { 0 };
    let mut row_offsets = Vec::with_capacity(n + 1);
    let mut col_indices = Vec::with_capacity(cap);
    let mut values = Vec::with_capacity(cap);
    row_offsets.push(0);
    for i in 0..n {
        let (cols, vals) = a.row(i);
        let diagonal = match kind {
            NormKind::AdjacencyNorm => None,
            NormKind::LaplacianNorm => Some(1.0),
            NormKind::GcnRenorm => Some(scale[i] * scale[i]),
        };
        let mut pending_diag = diagonal;
        for (&j, &w) in cols.iter().zip(vals) {
            if j > i {
                if let Some(d) = pending_diag.take() {
                    col_indices.push(i);
                    values.push(d);
                }
            }
            let s = scale[i] * w * scale[j];
            col_indices.push(j);
            values.push(if kind == NormKind::LaplacianNorm { -s } else { s });
        }
        if let Some(d) = pending_diag {
            col_indices.push(i);
            values.push(d);
        }
        row_offsets.push(col_indices.len());
    }
    NormalizedOperator {
        kind,
        matrix: CsrMatrix::from_parts_unchecked(n, n, row_offsets, col_indices, values),
    }
}

/// Sparse-dense product of a normalized operator with a node signal.
pub fn spmm(op: &NormalizedOperator, h: &DenseMatrix) -> Result<DenseMatrix> {
    op.spmm(h)
}
