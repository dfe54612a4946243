//! Datasets and the semi-supervised anomaly detection protocol built on them.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::graph::SparseGraph;
use crate::matrix::DenseMatrix;

/// Fraction of the labeled pool held out for validation.
pub const VALIDATION_FRACTION: f64 = 0.2;

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub name: String,
    pub graph: SparseGraph,
    pub features: DenseMatrix,
    pub class_labels: Vec<usize>,
    pub num_classes: usize,
}

impl Dataset {
    /// Validates shapes and label ranges.
    pub fn new(
        name: impl Into<String>,
        graph: SparseGraph,
        features: DenseMatrix,
        class_labels: Vec<usize>,
        num_classes: usize,
    ) -> Result<Self> {
        let n = graph.num_nodes();
        if features.rows() != n {
            return Err(Error::DimensionMismatch {
                op: "Dataset features",
                expected: (n, features.cols()),
                found: features.shape(),
            });
        }
        if class_labels.len() != n {
            return Err(Error::DimensionMismatch {
                op: "Dataset labels",
                expected: (n, 1),
                found: (class_labels.len(), 1),
            });
        }
        if let Some((i, &c)) = class_labels.iter().enumerate().find(|(_, &c)| c >= num_classes) {
            return Err(Error::InvalidParameter(alloc::format!(
                "node {i} has class {c}, outside [0, {num_classes})"
            )));
        }
        Ok(Self {
            name: name.into(),
            graph,
            features,
            class_labels,
            num_classes,
        })
    }

    pub fn num_nodes(&self) -> usize {
        self.graph.num_nodes()
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.num_classes];
        for &c in &self.class_labels {
            counts[c] += 1;
        }
        counts
    }

    /// The least populated class that occurs at all; ties go to the lower id.
    pub fn smallest_class(&self) -> Option<usize> {
        self.class_counts()
            .iter()
            .enumerate()
            .filter(|(_, &c)| c > 0)
            .min_by_key(|&(id, &c)| (c, id))
            .map(|(id, _)| id)
    }

    /// 1 for members of the smallest class, 0 otherwise.
    pub fn binary_labels(&self) -> Vec<u8> {
        let anomaly = self.smallest_class();
        self.class_labels
            .iter()
            .map(|&c| u8::from(Some(c) == anomaly))
            .collect()
    }

    /// Share of nodes in the anomaly class.
    pub fn anomaly_rate(&self) -> f64 {
        let n = self.num_nodes();
        if n == 0 {
            return 0.0;
        }
        self.binary_labels().iter().filter(|&&y| y == 1).count() as f64 / n as f64
    }
}

/// Which nodes may be drawn into the labeled pool.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum LabelMode {
    /// Only normal nodes are labeled.
    #[default]
    NormalOnly,
    /// Labels are drawn from all nodes.
    Both,
}

impl LabelMode {
    pub fn as_str(self) -> &'static str {
        match self {
            LabelMode::NormalOnly => "normal_only",
            LabelMode::Both => "both",
        }
    }
}

impl core::str::FromStr for LabelMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "normal_only" | "normal-only" | "normal" => Ok(LabelMode::NormalOnly),
            "both" => Ok(LabelMode::Both),
            other => Err(Error::InvalidParameter(alloc::format!(
                "unknown label mode {other:?}"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnomalyTask {
    /// 1 = anomalous.
    pub binary_labels: Vec<u8>,
    pub labeled_train_idx: Vec<usize>,
    pub labeled_val_idx: Vec<usize>,
    /// Every unlabeled node.
    pub test_idx: Vec<usize>,
    pub label_rate: f64,
    pub label_mode: LabelMode,
    pub seed: u64,
}

impl AnomalyTask {
    pub fn num_nodes(&self) -> usize {
        self.binary_labels.len()
    }

    pub fn num_labeled(&self) -> usize {
        self.labeled_train_idx.len() + self.labeled_val_idx.len()
    }
}

/// Samples `k` of `pool` uniformly without replacement; result is sorted.
fn sample(pool: &[usize], k: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let mut picked: Vec<usize> = pool.choose_multiple(rng, k).copied().collect();
    picked.sort_unstable();
    picked
}

fn split_off_validation(labeled: &[usize], rng: &mut ChaCha8Rng) -> (Vec<usize>, Vec<usize>) {
    let n_val = libm::round(VALIDATION_FRACTION * labeled.len() as f64) as usize;
    let val = sample(labeled, n_val, rng);
    let train = labeled
        .iter()
        .copied()
        .filter(|i| val.binary_search(i).is_err())
        .collect();
    (train, val)
}

/// Builds the anomaly task for one run.
///
/// The smallest class is the anomaly class. `round(label_rate · N)` nodes are
/// labeled, drawn from normal nodes only or from all nodes depending on
/// `mode`, and split 80/20 into train and validation (per class when both
/// classes were drawn). Every other node is a test node.
pub fn make_anomaly_task(
    ds: &Dataset,
    label_rate: f64,
    seed: u64,
    mode: LabelMode,
) -> Result<AnomalyTask> {
    if !(label_rate > 0.0 && label_rate < 1.0) {
        return Err(Error::InvalidParameter(alloc::format!(
            "label rate must lie in (0, 1), got {label_rate}"
        )));
    }
    let n = ds.num_nodes();
    let binary_labels = ds.binary_labels();
    let pool_size = libm::round(label_rate * n as f64) as usize;
    if pool_size == 0 {
        return Err(Error::EmptyLabeledSet);
    }
    let candidates: Vec<usize> = match mode {
        LabelMode::NormalOnly => (0..n).filter(|&i| binary_labels[i] == 0).collect(),
        LabelMode::Both => (0..n).collect(),
    };
    if pool_size > candidates.len() {
        return Err(Error::InvalidParameter(alloc::format!(
            "cannot label {pool_size} nodes from {} candidates",
            candidates.len()
        )));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let labeled = sample(&candidates, pool_size, &mut rng);

    let (normal, anomalous): (Vec<usize>, Vec<usize>) =
        labeled.iter().partition(|&&i| binary_labels[i] == 0);
    let (mut train, mut val) = if !normal.is_empty() && !anomalous.is_empty() {
        let (mut tn, mut vn) = split_off_validation(&normal, &mut rng);
        let (ta, va) = split_off_validation(&anomalous, &mut rng);
        tn.extend(ta);
        vn.extend(va);
        (tn, vn)
    } else {
        split_off_validation(&labeled, &mut rng)
    };
    train.sort_unstable();
    val.sort_unstable();

    let test_idx = (0..n)
        .filter(|i| labeled.binary_search(i).is_err())
        .collect();
    Ok(AnomalyTask {
        binary_labels,
        labeled_train_idx: train,
        labeled_val_idx: val,
        test_idx,
        label_rate,
        label_mode: mode,
        seed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ten_nodes() -> Dataset {
        let labels = vec![0, 0, 0, 0, 0, 0, 0, 1, 1, 1];
        Dataset::new(
            "toy",
            SparseGraph::empty(10),
            DenseMatrix::zeros(10, 1),
            labels,
            2,
        )
        .unwrap()
    }

    #[test]
    fn smallest_class_is_anomalous() {
        let ds = ten_nodes();
        assert_eq!(ds.smallest_class(), Some(1));
        assert_eq!(ds.binary_labels(), vec![0, 0, 0, 0, 0, 0, 0, 1, 1, 1]);
        assert!((ds.anomaly_rate() - 0.3).abs() < 1e-15);
    }

    #[test]
    fn smallest_class_ties_break_low() {
        let ds = Dataset::new(
            "tie",
            SparseGraph::empty(6),
            DenseMatrix::zeros(6, 1),
            vec![2, 2, 0, 1, 1, 0],
            4,
        )
        .unwrap();
        // Class 3 never occurs and is skipped.
        assert_eq!(ds.smallest_class(), Some(0));
    }

    #[test]
    fn task_partitions_nodes() {
        let ds = ten_nodes();
        let t = make_anomaly_task(&ds, 0.5, 3, LabelMode::NormalOnly).unwrap();
        assert_eq!(t.num_labeled(), 5);
        assert_eq!(t.labeled_val_idx.len(), 1);
        assert!(t
            .labeled_train_idx
            .iter()
            .chain(&t.labeled_val_idx)
            .all(|&i| t.binary_labels[i] == 0));
        let mut all: Vec<usize> = t
            .labeled_train_idx
            .iter()
            .chain(&t.labeled_val_idx)
            .chain(&t.test_idx)
            .copied()
            .collect();
        all.sort_unstable();
        assert_eq!(all, (0..10).collect::<Vec<_>>());
        assert_eq!(t, make_anomaly_task(&ds, 0.5, 3, LabelMode::NormalOnly).unwrap());
    }

    #[test]
    fn task_errors() {
        let ds = ten_nodes();
        assert_eq!(
            make_anomaly_task(&ds, 0.01, 0, LabelMode::Both),
            Err(Error::EmptyLabeledSet)
        );
        assert!(make_anomaly_task(&ds, 1.5, 0, LabelMode::Both).is_err());
        assert!(make_anomaly_task(&ds, 0.0, 0, LabelMode::Both).is_err());
        assert!(make_anomaly_task(&ds, 0.9, 0, LabelMode::NormalOnly).is_err());
    }

    #[test]
    fn dataset_validation() {
        let bad = Dataset::new("x", SparseGraph::empty(2), DenseMatrix::zeros(2, 1), vec![0, 5], 2);
        assert!(bad.is_err());
        let bad = Dataset::new("x", SparseGraph::empty(2), DenseMatrix::zeros(3, 1), vec![0, 1], 2);
        assert!(bad.is_err());
    }

    #[test]
    fn label_mode_parsing() {
        assert_eq!("both".parse::<LabelMode>().unwrap(), LabelMode::Both);
        assert_eq!("normal_only".parse::<LabelMode>().unwrap(), LabelMode::NormalOnly);
        assert!("nope".parse::<LabelMode>().is_err());
    }
}
