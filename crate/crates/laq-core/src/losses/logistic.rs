//! Regularized multiclass logistic regression.
//!
//! The parameter is a `C×F` matrix flattened row-major to `p = C·F`. The
//! per-sample loss is the cross-entropy of `softmax(θx)` against the one-hot
//! label; the shard contributes `(1/N)·Σ_n ℓ_n + (N_m/N)·(λ/2)·Tr(θᵀθ)`.

use ndarray::{Array2, ArrayView2, Axis};

use super::{power_iteration_top_eigenvalue, softmax_in_place, DataShard, LossError};

#[derive(Debug, Clone)]
pub struct LogisticObjective {
    pub shard: DataShard,
    pub classes: usize,
    pub features: usize,
    pub lambda: f64,
}

impl LogisticObjective {
    pub fn new(shard: DataShard, lambda: f64) -> Self {
        let classes = shard.labels.ncols();
        let features = shard.features.ncols();
        LogisticObjective {
            shard,
            classes,
            features,
            lambda,
        }
    }

    pub fn dim(&self) -> usize {
        self.classes * self.features
    }

    fn theta<'a>(&self, params: &'a [f64]) -> ArrayView2<'a, f64> {
        ArrayView2::from_shape((self.classes, self.features), params)
            .expect("caller validated the parameter length")
    }

    /// Softmax probabilities for every row of `x`, shape `N×C`.
    fn probabilities(&self, params: &[f64], x: &ArrayView2<'_, f64>) -> Array2<f64> {
        let theta = self.theta(params);
        let mut logits = x.dot(&theta.t());
        for mut row in logits.rows_mut() {
            softmax_in_place(row.as_slice_mut().expect("logits are contiguous"));
        }
        logits
    }

    pub fn loss(&self, params: &[f64]) -> f64 {
        let x = self.shard.features.view();
        let probs = self.probabilities(params, &x);
        let scale = 1.0 / self.shard.total_samples as f64;
        let mut cross_entropy = 0.0;
        for (p_row, y_row) in probs.rows().into_iter().zip(self.shard.labels.rows()) {
            for (p, y) in p_row.iter().zip(y_row) {
                if *y != 0.0 {
                    cross_entropy -= y * p.max(f64::MIN_POSITIVE).ln();
                }
            }
        }
        let reg: f64 = params.iter().map(|t| t * t).sum();
        scale * cross_entropy + self.shard.weight() * 0.5 * self.lambda * reg
    }

    pub fn loss_and_gradient(&self, params: &[f64]) -> (f64, Vec<f64>) {
        let x = self.shard.features.view();
        let mut probs = self.probabilities(params, &x);
        let scale = 1.0 / self.shard.total_samples as f64;

        let mut cross_entropy = 0.0;
        for (p_row, y_row) in probs.rows().into_iter().zip(self.shard.labels.rows()) {
            for (p, y) in p_row.iter().zip(y_row) {
                if *y != 0.0 {
                    cross_entropy -= y * p.max(f64::MIN_POSITIVE).ln();
                }
            }
        }

        // ∇_θ = scale·(P − Y)ᵀX + weight·λθ, flattened row-major.
        probs -= &self.shard.labels;
        let data_grad = probs.t().dot(&x);
        let reg_weight = self.shard.weight() * self.lambda;
        let grad: Vec<f64> = data_grad
            .iter()
            .zip(params)
            .map(|(g, t)| scale * g + reg_weight * t)
            .collect();

        let reg: f64 = params.iter().map(|t| t * t).sum();
        let loss = scale * cross_entropy + self.shard.weight() * 0.5 * self.lambda * reg;
        (loss, grad)
    }

    pub fn minibatch_gradient(
        &self,
        params: &[f64],
        rows: &[usize],
    ) -> Result<Vec<f64>, LossError> {
        let n = self.shard.len();
        for &row in rows {
            if row >= n {
                return Err(LossError::RowOutOfRange { row, len: n });
            }
        }
        if rows.is_empty() {
            return Err(LossError::EmptyShard);
        }
        let x = self.shard.features.select(Axis(0), rows);
        let y = self.shard.labels.select(Axis(0), rows);
        let mut probs = self.probabilities(params, &x.view());
        probs -= &y;
        let data_grad = probs.t().dot(&x);
        // Unbiased estimate of the (1/N)-scaled data term.
        let scale = self.shard.len() as f64 / (self.shard.total_samples as f64 * rows.len() as f64);
        let reg_weight = self.shard.weight() * self.lambda;
        Ok(data_grad
            .iter()
            .zip(params)
            .map(|(g, t)| scale * g + reg_weight * t)
            .collect())
    }

    /// Upper bound on the gradient's Lipschitz constant:
    /// `(1/2)·λ_max(XᵀX)/N + (N_m/N)·λ`.
    ///
    /// The 1/2 is the largest eigenvalue the softmax covariance
    /// `diag(p) − ppᵀ` can reach (at C = 2, p = ½); the tighter 1/4 usually
    /// quoted for logistic regression belongs to the single-logit sigmoid
    /// parameterization, not the C×F softmax used here.
    pub fn smoothness_bound(&self) -> f64 {
        let x = &self.shard.features;
        let gram_top = power_iteration_top_eigenvalue(
            self.features,
            |v| {
                let v = ndarray::ArrayView1::from(v);
                let xv = x.dot(&v);
                x.t().dot(&xv).to_vec()
            },
            1e-9,
        );
        0.5 * gram_top / self.shard.total_samples as f64 + self.shard.weight() * self.lambda
    }

    pub fn accuracy(&self, params: &[f64], samples: &DataShard) -> f64 {
        let probs = self.probabilities(params, &samples.features.view());
        let mut correct = 0usize;
        for (p_row, y_row) in probs.rows().into_iter().zip(samples.labels.rows()) {
            let predicted = argmax(p_row.iter().copied());
            let actual = argmax(y_row.iter().copied());
            if predicted == actual {
                correct += 1;
            }
        }
        correct as f64 / samples.len() as f64
    }
}

pub(crate) fn argmax(values: impl Iterator<Item = f64>) -> usize {
    let mut best = 0;
    let mut best_value = f64::NEG_INFINITY;
    for (i, v) in values.enumerate() {
        if v > best_value {
            best = i;
            best_value = v;
        }
    }
    best
}
