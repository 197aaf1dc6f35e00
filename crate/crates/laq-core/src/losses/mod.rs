//! Loss and gradient oracles for the three model families.
//!
//! Every worker owns one [`WorkerObjective`]; the global objective is the
//! plain sum over workers. Sample-based objectives (logistic, MLP) follow
//! the global `1/N` convention: a worker holding `N_m` of `N` samples
//! contributes `(1/N)·Σ_n ℓ_n + (N_m/N)·(λ/2)·‖θ‖²`, so the full-dataset
//! loss is the mean cross-entropy plus `(λ/2)·‖θ‖²` and `f = Σ_m f_m`
//! holds exactly.

mod logistic;
mod mlp;
mod quadratic;

pub use logistic::LogisticObjective;
pub use mlp::{glorot_init, MlpLayout, MlpObjective};
pub use quadratic::QuadraticTerm;

use ndarray::Array2;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum LossError {
    #[error("parameter vector has {got} entries, model expects {expected}")]
    ShapeMismatch { expected: usize, got: usize },
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("shard needs at least one sample")]
    EmptyShard,
    #[error("labels must be one-hot rows over {classes} classes")]
    BadLabels { classes: usize },
    #[error("feature matrix is {rows}×{cols}, labels are {label_rows}×{label_cols}")]
    InconsistentShard {
        rows: usize,
        cols: usize,
        label_rows: usize,
        label_cols: usize,
    },
    #[error("minibatch row {row} out of range for shard of {len} samples")]
    RowOutOfRange { row: usize, len: usize },
    #[error("not defined for {0}")]
    Unsupported(&'static str),
}

/// A worker's slice of a sample-based dataset.
///
/// `total_samples` is the global `N` used by the `1/N` normalization; for a
/// shard that *is* the whole dataset it equals the number of rows.
#[derive(Debug, Clone)]
pub struct DataShard {
    pub features: Array2<f64>,
    pub labels: Array2<f64>,
    pub total_samples: usize,
}

impl DataShard {
    pub fn new(
        features: Array2<f64>,
        labels: Array2<f64>,
        total_samples: usize,
    ) -> Result<Self, LossError> {
        if features.nrows() == 0 {
            return Err(LossError::EmptyShard);
        }
        if features.nrows() != labels.nrows() {
            return Err(LossError::InconsistentShard {
                rows: features.nrows(),
                cols: features.ncols(),
                label_rows: labels.nrows(),
                label_cols: labels.ncols(),
            });
        }
        if features.iter().any(|v| !v.is_finite()) {
            return Err(LossError::NonFinite("features"));
        }
        for row in labels.rows() {
            let sum: f64 = row.sum();
            let valid = (sum - 1.0).abs() < 1e-12 && row.iter().all(|&v| v == 0.0 || v == 1.0);
            if !valid {
                return Err(LossError::BadLabels {
                    classes: labels.ncols(),
                });
            }
        }
        Ok(DataShard {
            features,
            labels,
            total_samples,
        })
    }

    pub fn len(&self) -> usize {
        self.features.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.features.nrows() == 0
    }

    /// Weight of this shard in the global objective, `N_m / N`.
    pub fn weight(&self) -> f64 {
        self.len() as f64 / self.total_samples as f64
    }
}

/// One worker's local objective `f_m`.
#[derive(Debug, Clone)]
pub enum WorkerObjective {
    Quadratic(QuadraticTerm),
    Logistic(LogisticObjective),
    Mlp(MlpObjective),
}

impl WorkerObjective {
    pub fn dim(&self) -> usize {
        match self {
            WorkerObjective::Quadratic(q) => q.dim(),
            WorkerObjective::Logistic(l) => l.dim(),
            WorkerObjective::Mlp(m) => m.dim(),
        }
    }

    /// Number of local samples; a quadratic term counts as one.
    pub fn num_samples(&self) -> usize {
        match self {
            WorkerObjective::Quadratic(_) => 1,
            WorkerObjective::Logistic(l) => l.shard.len(),
            WorkerObjective::Mlp(m) => m.shard.len(),
        }
    }

    pub fn loss(&self, params: &[f64]) -> Result<f64, LossError> {
        check_params(self.dim(), params)?;
        match self {
            WorkerObjective::Quadratic(q) => Ok(q.loss(params)),
            WorkerObjective::Logistic(l) => Ok(l.loss(params)),
            WorkerObjective::Mlp(m) => Ok(m.loss(params)),
        }
    }

    pub fn gradient(&self, params: &[f64]) -> Result<Vec<f64>, LossError> {
        Ok(self.loss_and_gradient(params)?.1)
    }

    /// One fused pass; all three variants share the forward work between the
    /// loss value and the gradient.
    pub fn loss_and_gradient(&self, params: &[f64]) -> Result<(f64, Vec<f64>), LossError> {
        check_params(self.dim(), params)?;
        match self {
            WorkerObjective::Quadratic(q) => Ok(q.loss_and_gradient(params)),
            WorkerObjective::Logistic(l) => Ok(l.loss_and_gradient(params)),
            WorkerObjective::Mlp(m) => Ok(m.loss_and_gradient(params)),
        }
    }

    /// Unbiased stochastic gradient from the given shard rows. The data term
    /// is scaled by `N_m/(N·|B|)`; the regularizer stays exact. A quadratic
    /// term has no samples to subsample, so it returns the exact gradient.
    pub fn minibatch_gradient(
        &self,
        params: &[f64],
        rows: &[usize],
    ) -> Result<Vec<f64>, LossError> {
        check_params(self.dim(), params)?;
        match self {
            WorkerObjective::Quadratic(q) => Ok(q.loss_and_gradient(params).1),
            WorkerObjective::Logistic(l) => l.minibatch_gradient(params, rows),
            WorkerObjective::Mlp(m) => m.minibatch_gradient(params, rows),
        }
    }

    /// Estimated Lipschitz constant of the local gradient.
    ///
    /// Exact for quadratics (largest eigenvalue, power iteration); an upper
    /// bound for logistic; unavailable for the nonconvex MLP.
    pub fn smoothness_constant(&self) -> Result<f64, LossError> {
        match self {
            WorkerObjective::Quadratic(q) => Ok(q.smoothness_constant()),
            WorkerObjective::Logistic(l) => Ok(l.smoothness_bound()),
            WorkerObjective::Mlp(_) => Err(LossError::Unsupported("the MLP model")),
        }
    }

    /// Fraction of `samples` classified correctly by arg-max prediction.
    /// Only defined for the classifier variants.
    pub fn accuracy(&self, params: &[f64], samples: &DataShard) -> Result<f64, LossError> {
        check_params(self.dim(), params)?;
        match self {
            WorkerObjective::Quadratic(_) => Err(LossError::Unsupported("a quadratic model")),
            WorkerObjective::Logistic(l) => Ok(l.accuracy(params, samples)),
            WorkerObjective::Mlp(m) => Ok(m.accuracy(params, samples)),
        }
    }
}

fn check_params(expected: usize, params: &[f64]) -> Result<(), LossError> {
    if params.len() != expected {
        return Err(LossError::ShapeMismatch {
            expected,
            got: params.len(),
        });
    }
    if params.iter().any(|v| !v.is_finite()) {
        return Err(LossError::NonFinite("parameters"));
    }
    Ok(())
}

/// Central-difference gradient, the verification oracle for the analytic
/// gradients: `(f(θ + h·e_i) − f(θ − h·e_i)) / (2h)` per coordinate.
pub fn finite_diff_gradient(
    objective: &WorkerObjective,
    params: &[f64],
    h: f64,
) -> Result<Vec<f64>, LossError> {
    assert!(h > 0.0, "step size must be positive");
    let mut probe = params.to_vec();
    let mut grad = Vec::with_capacity(params.len());
    for i in 0..params.len() {
        let original = probe[i];
        probe[i] = original + h;
        let plus = objective.loss(&probe)?;
        probe[i] = original - h;
        let minus = objective.loss(&probe)?;
        probe[i] = original;
        grad.push((plus - minus) / (2.0 * h));
    }
    Ok(grad)
}

/// Deterministic power iteration for the top eigenvalue of a symmetric PSD
/// operator given as `v ↦ Sv`. Stops when the Rayleigh-quotient residual
/// `‖Sv − λv‖ ≤ tol·max(λ, 1)`, which for a symmetric operator bounds the
/// eigenvalue error itself.
pub(crate) fn power_iteration_top_eigenvalue<F>(dim: usize, apply: F, tol: f64) -> f64
where
    F: Fn(&[f64]) -> Vec<f64>,
{
    // Index ramp keeps the start vector out of any axis-aligned eigenspace.
    let mut v: Vec<f64> = (0..dim).map(|i| 1.0 + (i as f64) * 1e-3).collect();
    normalize(&mut v);
    let mut eigenvalue = 0.0f64;
    for _ in 0..200_000 {
        let mut next = apply(&v);
        let norm = l2_norm(&next);
        if norm == 0.0 {
            return 0.0;
        }
        for x in &mut next {
            *x /= norm;
        }
        let image = apply(&next);
        eigenvalue = image.iter().zip(&next).map(|(a, b)| a * b).sum();
        let residual_sq: f64 = image
            .iter()
            .zip(&next)
            .map(|(s, x)| (s - eigenvalue * x) * (s - eigenvalue * x))
            .sum();
        v = next;
        if residual_sq.sqrt() <= tol * eigenvalue.abs().max(1.0) {
            break;
        }
    }
    eigenvalue
}

pub(crate) fn l2_norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn normalize(v: &mut [f64]) {
    let norm = l2_norm(v);
    if norm > 0.0 {
        for x in v.iter_mut() {
            *x /= norm;
        }
    }
}

/// Numerically stable softmax over one logit row, in place.
pub(crate) fn softmax_in_place(row: &mut [f64]) {
    let max = row.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b));
    let mut sum = 0.0;
    for x in row.iter_mut() {
        *x = (*x - max).exp();
        sum += *x;
    }
    for x in row.iter_mut() {
        *x /= sum;
    }
}
