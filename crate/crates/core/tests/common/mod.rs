#![allow(dead_code)]

use gfcn_core::synth::random_graph;
use gfcn_core::{DenseMatrix, NormKind, SparseGraph};
use nalgebra::{DMatrix, SymmetricEigen};

pub fn to_na(m: &DenseMatrix) -> DMatrix<f64> {
    DMatrix::from_row_slice(m.rows(), m.cols(), m.as_slice())
}

pub fn from_na(m: &DMatrix<f64>) -> DenseMatrix {
    DenseMatrix::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)])
}

/// Dense normalized Laplacian built straight from the definition, not from
/// the library's normalize().
pub fn dense_laplacian(g: &SparseGraph) -> DMatrix<f64> {
    let n = g.num_nodes();
    let mut a = DMatrix::<f64>::zeros(n, n);
    for (u, v) in g.edges() {
        a[(u, v)] = 1.0;
        a[(v, u)] = 1.0;
    }
    let d: Vec<f64> = (0..n).map(|i| a.row(i).sum()).collect();
    let mut l = DMatrix::<f64>::identity(n, n);
    for i in 0..n {
        for j in 0..n {
            if a[(i, j)] != 0.0 {
                l[(i, j)] -= a[(i, j)] / (d[i] * d[j]).sqrt();
            }
        }
    }
    l
}

pub fn laplacian_eigen(g: &SparseGraph) -> SymmetricEigen<f64, nalgebra::Dyn> {
    SymmetricEigen::new(dense_laplacian(g))
}

/// `U diag(1/(1+sλ)) Uᵀ X` from a dense eigendecomposition.
pub fn spectral_filter(g: &SparseGraph, x: &DenseMatrix, s: f64) -> DenseMatrix {
    let eig = laplacian_eigen(g);
    let u = &eig.eigenvectors;
    let h = DMatrix::from_diagonal(&eig.eigenvalues.map(|l| 1.0 / (1.0 + s * l)));
    from_na(&(u * h * u.transpose() * to_na(x)))
}

pub fn relative_error(a: &DenseMatrix, b: &DenseMatrix) -> f64 {
    let diff = a.sub(b).unwrap().frobenius_norm();
    let scale = b.frobenius_norm();
    if scale == 0.0 {
        diff
    } else {
        diff / scale
    }
}

/// A spread of random graphs: sizes up to `max_n`, densities from sparse to
/// nearly complete.
pub fn graph_family(count: usize, max_n: usize, seed: u64) -> Vec<SparseGraph> {
    (0..count)
        .map(|k| {
            let n = 5 + (k * 37 + 11) % (max_n - 4);
            let density = [0.5, 1.0, 2.0, 4.0, 10.0][k % 5];
            let pairs = ((density * n as f64) as usize).min(n * n);
            random_graph(n, pairs, seed + k as u64)
        })
        .collect()
}

pub fn path_graph(n: usize) -> SparseGraph {
    let edges: Vec<_> = (1..n).map(|i| (i - 1, i)).collect();
    SparseGraph::from_edges(n, &edges).unwrap()
}

pub fn normalized_dense(g: &SparseGraph, kind: NormKind) -> DMatrix<f64> {
    to_na(&g.normalize(kind).matrix().to_dense())
}
