//! Seeded synthetic graphs: uniform random graphs and a planted-partition
//! generator producing labeled bag-of-words datasets.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::graph::SparseGraph;
use crate::matrix::DenseMatrix;
use crate::task::Dataset;

/// Graph with `num_nodes` nodes and `num_pairs` uniformly drawn pairs
/// (self-loops and repeats are dropped, so `nnz ≤ 2 · num_pairs`).
pub fn random_graph(num_nodes: usize, num_pairs: usize, seed: u64) -> SparseGraph {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let edges: Vec<(usize, usize)> = if num_nodes < 2 {
        Vec::new()
    } else {
        (0..num_pairs)
            .map(|_| (rng.gen_range(0..num_nodes), rng.gen_range(0..num_nodes)))
            .collect()
    };
    SparseGraph::from_edges(num_nodes, &edges).expect("indices drawn in range")
}

/// Dense `n × f` matrix with entries uniform in `[-1, 1)`.
pub fn random_matrix(n: usize, f: usize, seed: u64) -> DenseMatrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    DenseMatrix::from_fn(n, f, |_, _| rng.gen_range(-1.0..1.0))
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlantedPartition {
    pub name: String,
    pub num_nodes: usize,
    /// Relative class sizes; normalized internally.
    pub class_weights: Vec<f64>,
    pub avg_degree: f64,
    /// Probability that an edge stays inside its class.
    pub homophily: f64,
    pub num_features: usize,
    /// Active words per node.
    pub words_per_node: usize,
    /// Probability that a word comes from the node's class vocabulary.
    pub topic_purity: f64,
    pub seed: u64,
}

impl Default for PlantedPartition {
    fn default() -> Self {
        Self {
            name: "planted".into(),
            num_nodes: 600,
            class_weights: vec![0.30, 0.25, 0.20, 0.18, 0.07],
            avg_degree: 4.0,
            homophily: 0.8,
            num_features: 200,
            words_per_node: 12,
            topic_purity: 0.5,
            seed: 0,
        }
    }
}

impl PlantedPartition {
    /// Generates the dataset. Class sizes are proportional to
    /// `class_weights`; the remainder goes to class 0.
    pub fn generate(&self) -> Result<Dataset> {
        let k = self.class_weights.len();
        if k < 2 || self.num_nodes < k || self.num_features < k {
            return Err(Error::InvalidParameter(
                "planted partition needs at least 2 classes, one node and one feature per class"
                    .into(),
            ));
        }
        if self.class_weights.iter().any(|&w| !(w > 0.0)) {
            return Err(Error::InvalidParameter("class weights must be positive".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let n = self.num_nodes;
        let total: f64 = self.class_weights.iter().sum();
        let mut sizes: Vec<usize> = self
            .class_weights
            .iter()
            .map(|w| ((w / total) * n as f64).max(1.0) as usize)
            .collect();
        let assigned: usize = sizes.iter().sum();
        if assigned > n {
            return Err(Error::InvalidParameter("class weights overflow the node count".into()));
        }
        sizes[0] += n - assigned;

        let mut labels = Vec::with_capacity(n);
        for (c, &size) in sizes.iter().enumerate() {
            labels.extend(core::iter::repeat_n(c, size));
        }
        let mut members: Vec<Vec<usize>> = vec![Vec::new(); k];
        for (i, &c) in labels.iter().enumerate() {
            members[c].push(i);
        }

        let num_pairs = libm::round(self.avg_degree * n as f64 / 2.0) as usize;
        let mut edges = Vec::with_capacity(num_pairs);
        for _ in 0..num_pairs {
            let u = rng.gen_range(0..n);
            let v = if rng.gen::<f64>() < self.homophily {
                let own = &members[labels[u]];
                own[rng.gen_range(0..own.len())]
            } else {
                rng.gen_range(0..n)
            };
            edges.push((u, v));
        }
        let graph = SparseGraph::from_edges(n, &edges)?;

        let block = self.num_features / k;
        let mut features = DenseMatrix::zeros(n, self.num_features);
        for (i, &c) in labels.iter().enumerate() {
            for _ in 0..self.words_per_node {
                let word = if rng.gen::<f64>() < self.topic_purity {
                    c * block + rng.gen_range(0..block)
                } else {
                    rng.gen_range(0..self.num_features)
                };
                features.set(i, word, 1.0);
            }
        }
        Dataset::new(self.name.clone(), graph, features, labels, k)
    }
}
