//! Dataset loading (MNIST IDX, LIBSVM text), worker partitioning, and
//! synthetic problem generation with exactly known constants.

mod idx;
mod libsvm;
mod partition;
mod synthetic;

pub use idx::load_mnist_idx;
pub use libsvm::{load_libsvm, LibsvmLoad};
pub use partition::{partition, PartitionMode, PartitionPlan};
pub use synthetic::{synthetic_classification, synthetic_quadratic, QuadraticProblem};

use ndarray::{Array2, Axis};
use thiserror::Error;

use crate::losses::DataShard;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("i/o error reading {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("{path}: bad magic number {got:#010x}, expected {expected:#010x}")]
    BadMagic {
        path: String,
        got: u32,
        expected: u32,
    },
    #[error("{path}: truncated, needed {expected} bytes but found {actual}")]
    Truncated {
        path: String,
        expected: usize,
        actual: usize,
    },
    #[error("{path}: contains no samples")]
    Empty { path: String },
    #[error("{path}: label {value} at sample {index} out of range (classes: {classes})")]
    LabelOutOfRange {
        path: String,
        index: usize,
        value: u8,
        classes: usize,
    },
    #[error("image file has {images} samples but label file has {labels}")]
    CountMismatch { images: usize, labels: usize },
    #[error("{path}:{line}: {message}")]
    MalformedLine {
        path: String,
        line: usize,
        message: String,
    },
    #[error("{path}:{line}: feature index {index} exceeds declared dimension {dim}")]
    FeatureIndexOutOfRange {
        path: String,
        line: usize,
        index: usize,
        dim: usize,
    },
    #[error("cannot split {samples} samples across {workers} workers")]
    TooManyWorkers { workers: usize, samples: usize },
    #[error("infeasible spectrum: {0}")]
    InfeasibleSpectrum(String),
}

/// An in-memory dataset: dense features and one-hot labels.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub features: Array2<f64>,
    pub labels: Array2<f64>,
    pub name: String,
    pub classes: usize,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.features.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.features.nrows() == 0
    }

    pub fn feature_dim(&self) -> usize {
        self.features.ncols()
    }

    /// The whole dataset as a single shard (weight 1 in the global loss).
    pub fn as_single_shard(&self) -> DataShard {
        DataShard::new(self.features.clone(), self.labels.clone(), self.len())
            .expect("a loaded dataset is always a valid shard")
    }

    /// Materializes the per-worker shards of a partition plan. Every shard
    /// carries the global sample count so the `1/N` weighting is preserved.
    pub fn shards(&self, plan: &PartitionPlan) -> Vec<DataShard> {
        plan.shards
            .iter()
            .map(|rows| {
                DataShard::new(
                    self.features.select(Axis(0), rows),
                    self.labels.select(Axis(0), rows),
                    self.len(),
                )
                .expect("partition rows are valid indices")
            })
            .collect()
    }
}

pub(crate) fn one_hot(rows: &[usize], classes: usize) -> Array2<f64> {
    let mut labels = Array2::zeros((rows.len(), classes));
    for (i, &class) in rows.iter().enumerate() {
        labels[(i, class)] = 1.0;
    }
    labels
}
