//! On-disk formats: dataset directories, `features.bin` matrix blocks,
//! parameter checkpoints, task manifests and training histories.

use std::fs;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use gfcn_core::{AnomalyTask, Dataset, DenseMatrix, EpochRecord, LabelMode, SparseGraph};
use serde::{Deserialize, Serialize};

pub const FEATURES_MAGIC: [u8; 8] = *b"GFCNFEAT";
/// Magic, row count and column count.
pub const BLOCK_HEADER_LEN: usize = 16;
pub const CHECKPOINT_FORMAT: &str = "gfcn-checkpoint";

#[derive(Debug, thiserror::Error)]
pub enum DataError {
    #[error("{}: no such file or directory", path.display())]
    Missing { path: PathBuf },

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },

    #[error("{}: bad magic {:?}, expected \"GFCNFEAT\"", path.display(), String::from_utf8_lossy(found))]
    BadMagic { path: PathBuf, found: Vec<u8> },

    #[error("{}: truncated, expected {expected} bytes but found {actual}", path.display())]
    Truncated {
        path: PathBuf,
        expected: u64,
        actual: u64,
    },

    #[error("{}: {extra} unexpected bytes after the last block", path.display())]
    TrailingData { path: PathBuf, extra: u64 },

    #[error("{}: {what} mismatch, expected {expected} but found {found}", path.display())]
    CountMismatch {
        path: PathBuf,
        what: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("{}:{line}: {message}", path.display())]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("{}: {source}", path.display())]
    Invalid {
        path: PathBuf,
        #[source]
        source: gfcn_core::Error,
    },
}

pub type Result<T, E = DataError> = std::result::Result<T, E>;

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> DataError + '_ {
    move |source| {
        if source.kind() == io::ErrorKind::NotFound {
            DataError::Missing {
                path: path.to_path_buf(),
            }
        } else {
            DataError::Io {
                path: path.to_path_buf(),
                source,
            }
        }
    }
}

fn invalid(path: &Path) -> impl FnOnce(gfcn_core::Error) -> DataError + '_ {
    move |source| DataError::Invalid {
        path: path.to_path_buf(),
        source,
    }
}

fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(io_err(path))
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(io_err(path))
}

/// Writes `bytes` to `path` in one call.
pub fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(io_err(path))
}

/// Appends one matrix block (magic, `u32` rows, `u32` cols, `f32` values,
/// all little-endian) to `out`.
pub fn encode_block(m: &DenseMatrix, out: &mut Vec<u8>) {
    let rows = u32::try_from(m.rows()).expect("row count fits in u32");
    let cols = u32::try_from(m.cols()).expect("column count fits in u32");
    out.reserve(BLOCK_HEADER_LEN + 4 * m.as_slice().len());
    out.extend_from_slice(&FEATURES_MAGIC);
    out.extend_from_slice(&rows.to_le_bytes());
    out.extend_from_slice(&cols.to_le_bytes());
    for &v in m.as_slice() {
        out.extend_from_slice(&(v as f32).to_le_bytes());
    }
}

/// Decodes the block at the start of `bytes`; returns it with the rest.
fn decode_block<'a>(bytes: &'a [u8], offset: u64, path: &Path) -> Result<(DenseMatrix, &'a [u8])> {
    if bytes.len() < BLOCK_HEADER_LEN {
        return Err(DataError::Truncated {
            path: path.to_path_buf(),
            expected: offset + BLOCK_HEADER_LEN as u64,
            actual: offset + bytes.len() as u64,
        });
    }
    if bytes[..8] != FEATURES_MAGIC {
        return Err(DataError::BadMagic {
            path: path.to_path_buf(),
            found: bytes[..8].to_vec(),
        });
    }
    let rows = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    let cols = u32::from_le_bytes(bytes[12..16].try_into().unwrap()) as usize;
    let payload = 4 * rows as u64 * cols as u64;
    let needed = BLOCK_HEADER_LEN as u64 + payload;
    if (bytes.len() as u64) < needed {
        return Err(DataError::Truncated {
            path: path.to_path_buf(),
            expected: offset + needed,
            actual: offset + bytes.len() as u64,
        });
    }
    let needed = needed as usize;
    let values = bytes[BLOCK_HEADER_LEN..needed]
        .chunks_exact(4)
        .map(|c| f64::from(f32::from_le_bytes(c.try_into().unwrap())))
        .collect();
    let m = DenseMatrix::from_vec(rows, cols, values).map_err(invalid(path))?;
    Ok((m, &bytes[needed..]))
}

/// Reads a `features.bin` file holding exactly one block.
pub fn read_features(path: &Path) -> Result<DenseMatrix> {
    let bytes = read_bytes(path)?;
    let (m, rest) = decode_block(&bytes, 0, path)?;
    if !rest.is_empty() {
        return Err(DataError::TrailingData {
            path: path.to_path_buf(),
            extra: rest.len() as u64,
        });
    }
    Ok(m)
}

/// Writes `m` as a `features.bin` file. Values are stored as `f32`.
pub fn write_features(path: &Path, m: &DenseMatrix) -> Result<()> {
    let mut bytes = Vec::new();
    encode_block(m, &mut bytes);
    write_file(path, &bytes)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub name: String,
    pub num_nodes: usize,
    pub num_features: usize,
    pub num_classes: usize,
}

fn parse_json<T: serde::de::DeserializeOwned>(path: &Path, text: &str) -> Result<T> {
    serde_json::from_str(text).map_err(|e| DataError::Parse {
        path: path.to_path_buf(),
        line: e.line(),
        message: e.to_string(),
    })
}

fn parse_edges(path: &Path, text: &str) -> Result<Vec<(usize, usize)>> {
    let mut edges = Vec::new();
    for (k, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let parse_err = |message: String| DataError::Parse {
            path: path.to_path_buf(),
            line: k + 1,
            message,
        };
        let mut fields = line.split_whitespace();
        let mut next = || -> Result<usize> {
            let field = fields
                .next()
                .ok_or_else(|| parse_err(format!("expected \"u v\", got {line:?}")))?;
            field
                .parse()
                .map_err(|_| parse_err(format!("{field:?} is not a node index")))
        };
        let (u, v) = (next()?, next()?);
        if fields.next().is_some() {
            return Err(parse_err(format!("expected \"u v\", got {line:?}")));
        }
        edges.push((u, v));
    }
    Ok(edges)
}

fn parse_labels(path: &Path, text: &str) -> Result<Vec<usize>> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(k, l)| {
            l.trim().parse().map_err(|_| DataError::Parse {
                path: path.to_path_buf(),
                line: k + 1,
                message: format!("{:?} is not a class id", l.trim()),
            })
        })
        .collect()
}

/// Loads a dataset directory (`meta.json`, `edges.txt`, `features.bin`,
/// `labels.txt`) and checks every file against the counts in `meta.json`.
pub fn load_dataset(dir: &Path) -> Result<Dataset> {
    if !dir.is_dir() {
        return Err(DataError::Missing {
            path: dir.to_path_buf(),
        });
    }
    let meta_path = dir.join("meta.json");
    let meta: DatasetMeta = parse_json(&meta_path, &read_text(&meta_path)?)?;

    let edges_path = dir.join("edges.txt");
    let edges = parse_edges(&edges_path, &read_text(&edges_path)?)?;
    let graph = SparseGraph::from_edges(meta.num_nodes, &edges).map_err(invalid(&edges_path))?;

    let features_path = dir.join("features.bin");
    let features = read_features(&features_path)?;
    for (what, expected, found) in [
        ("node count", meta.num_nodes, features.rows()),
        ("feature count", meta.num_features, features.cols()),
    ] {
        if expected != found {
            return Err(DataError::CountMismatch {
                path: features_path,
                what,
                expected,
                found,
            });
        }
    }

    let labels_path = dir.join("labels.txt");
    let labels = parse_labels(&labels_path, &read_text(&labels_path)?)?;
    if labels.len() != meta.num_nodes {
        return Err(DataError::CountMismatch {
            path: labels_path,
            what: "label count",
            expected: meta.num_nodes,
            found: labels.len(),
        });
    }
    Dataset::new(meta.name, graph, features, labels, meta.num_classes).map_err(invalid(&labels_path))
}

/// Writes `ds` as a dataset directory, creating it if needed.
pub fn save_dataset(dir: &Path, ds: &Dataset) -> Result<()> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let meta = DatasetMeta {
        name: ds.name.clone(),
        num_nodes: ds.num_nodes(),
        num_features: ds.features.cols(),
        num_classes: ds.num_classes,
    };
    write_json(&dir.join("meta.json"), &meta)?;

    let mut edges = String::new();
    for (u, v) in ds.graph.edges() {
        edges.push_str(&format!("{u} {v}\n"));
    }
    write_file(&dir.join("edges.txt"), edges.as_bytes())?;
    write_features(&dir.join("features.bin"), &ds.features)?;
    let labels: String = ds.class_labels.iter().map(|c| format!("{c}\n")).collect();
    write_file(&dir.join("labels.txt"), labels.as_bytes())
}

/// Pretty JSON followed by a newline.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).expect("serializable value");
    text.push('\n');
    write_file(path, text.as_bytes())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub format: String,
    pub model: String,
    pub dims: Vec<usize>,
    pub seed: u64,
    pub num_layers: usize,
    pub num_matrices: usize,
}

/// Writes a checkpoint: one JSON header line, then one matrix block per
/// weight matrix in layer order.
pub fn write_checkpoint(path: &Path, header: &CheckpointHeader, matrices: &[&DenseMatrix]) -> Result<()> {
    let mut bytes = serde_json::to_vec(header).expect("serializable header");
    bytes.push(b'\n');
    for m in matrices {
        encode_block(m, &mut bytes);
    }
    write_file(path, &bytes)
}

pub fn read_checkpoint(path: &Path) -> Result<(CheckpointHeader, Vec<DenseMatrix>)> {
    let bytes = read_bytes(path)?;
    let newline = bytes.iter().position(|&b| b == b'\n').ok_or_else(|| DataError::Parse {
        path: path.to_path_buf(),
        line: 1,
        message: "missing checkpoint header".into(),
    })?;
    let header_text = std::str::from_utf8(&bytes[..newline]).map_err(|_| DataError::Parse {
        path: path.to_path_buf(),
        line: 1,
        message: "checkpoint header is not UTF-8".into(),
    })?;
    let header: CheckpointHeader = parse_json(path, header_text)?;
    if header.format != CHECKPOINT_FORMAT {
        return Err(DataError::Parse {
            path: path.to_path_buf(),
            line: 1,
            message: format!("unknown checkpoint format {:?}", header.format),
        });
    }
    let mut rest = &bytes[newline + 1..];
    let mut matrices = Vec::with_capacity(header.num_matrices);
    while !rest.is_empty() {
        let offset = (bytes.len() - rest.len()) as u64;
        let (m, tail) = decode_block(rest, offset, path)?;
        matrices.push(m);
        rest = tail;
    }
    if matrices.len() != header.num_matrices {
        return Err(DataError::CountMismatch {
            path: path.to_path_buf(),
            what: "matrix count",
            expected: header.num_matrices,
            found: matrices.len(),
        });
    }
    Ok((header, matrices))
}

/// Everything needed to replay a run's label split exactly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskManifest {
    pub dataset: String,
    pub label_rate: f64,
    pub label_mode: String,
    pub seed: u64,
    pub labeled_train_idx: Vec<usize>,
    pub labeled_val_idx: Vec<usize>,
    pub test_idx: Vec<usize>,
}

impl TaskManifest {
    pub fn new(dataset: &str, task: &AnomalyTask) -> Self {
        Self {
            dataset: dataset.to_string(),
            label_rate: task.label_rate,
            label_mode: task.label_mode.as_str().to_string(),
            seed: task.seed,
            labeled_train_idx: task.labeled_train_idx.clone(),
            labeled_val_idx: task.labeled_val_idx.clone(),
            test_idx: task.test_idx.clone(),
        }
    }

    /// Rebuilds the task on `ds`, whose smallest class supplies the labels.
    pub fn to_task(&self, ds: &Dataset) -> gfcn_core::Result<AnomalyTask> {
        let n = ds.num_nodes();
        let mut seen = vec![false; n];
        for &i in self.labeled_train_idx.iter().chain(&self.labeled_val_idx).chain(&self.test_idx) {
            if i >= n || std::mem::replace(&mut seen[i], true) {
                return Err(gfcn_core::Error::InvalidParameter(format!(
                    "manifest index {i} is out of range or repeated"
                )));
            }
        }
        Ok(AnomalyTask {
            binary_labels: ds.binary_labels(),
            labeled_train_idx: self.labeled_train_idx.clone(),
            labeled_val_idx: self.labeled_val_idx.clone(),
            test_idx: self.test_idx.clone(),
            label_rate: self.label_rate,
            label_mode: self.label_mode.parse::<LabelMode>()?,
            seed: self.seed,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HistoryLine {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
}

impl From<&EpochRecord> for HistoryLine {
    fn from(r: &EpochRecord) -> Self {
        Self {
            epoch: r.epoch,
            train_loss: r.train_loss,
            val_loss: r.val_loss,
        }
    }
}

/// One JSON object per epoch, one per line.
pub fn write_history(path: &Path, history: &[EpochRecord]) -> Result<()> {
    let file = fs::File::create(path).map_err(io_err(path))?;
    let mut out = BufWriter::new(file);
    for r in history {
        serde_json::to_writer(&mut out, &HistoryLine::from(r)).expect("serializable record");
        out.write_all(b"\n").map_err(io_err(path))?;
    }
    out.flush().map_err(io_err(path))
}

pub fn read_history(path: &Path) -> Result<Vec<HistoryLine>> {
    read_text(path)?
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(k, l)| {
            serde_json::from_str(l).map_err(|e| DataError::Parse {
                path: path.to_path_buf(),
                line: k + 1,
                message: e.to_string(),
            })
        })
        .collect()
}
