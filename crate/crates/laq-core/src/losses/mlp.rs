//! One-hidden-layer ReLU network with a softmax cross-entropy head.
//!
//! Parameters are flattened as `[W1 (H×I) | b1 (H) | W2 (C×H) | b2 (C)]`,
//! all row-major. The regularizer `(λ/2)·‖params‖²` covers weights and
//! biases alike, and the shard weighting follows the same global `1/N`
//! convention as the logistic model.

use ndarray::{Array2, ArrayView1, ArrayView2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

use super::logistic::argmax;
use super::{softmax_in_place, DataShard, LossError};

/// Layer sizes of the network; the experiments use `784 → 200 → 10`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MlpLayout {
    pub input: usize,
    pub hidden: usize,
    pub output: usize,
}

impl MlpLayout {
    pub fn new(input: usize, hidden: usize, output: usize) -> Self {
        MlpLayout {
            input,
            hidden,
            output,
        }
    }

    pub fn dim(&self) -> usize {
        self.hidden * self.input + self.hidden + self.output * self.hidden + self.output
    }

    fn w1_range(&self) -> std::ops::Range<usize> {
        0..self.hidden * self.input
    }

    fn b1_range(&self) -> std::ops::Range<usize> {
        let start = self.hidden * self.input;
        start..start + self.hidden
    }

    fn w2_range(&self) -> std::ops::Range<usize> {
        let start = self.hidden * self.input + self.hidden;
        start..start + self.output * self.hidden
    }

    fn b2_range(&self) -> std::ops::Range<usize> {
        let start = self.hidden * self.input + self.hidden + self.output * self.hidden;
        start..start + self.output
    }
}

/// Seeded Glorot-uniform weights (`±√(6/(fan_in+fan_out))`), zero biases.
pub fn glorot_init(layout: MlpLayout, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut params = vec![0.0; layout.dim()];
    let w1_bound = (6.0 / (layout.input + layout.hidden) as f64).sqrt();
    for i in layout.w1_range() {
        params[i] = rng.gen_range(-w1_bound..w1_bound);
    }
    let w2_bound = (6.0 / (layout.hidden + layout.output) as f64).sqrt();
    for i in layout.w2_range() {
        params[i] = rng.gen_range(-w2_bound..w2_bound);
    }
    params
}

#[derive(Debug, Clone)]
pub struct MlpObjective {
    pub shard: DataShard,
    pub layout: MlpLayout,
    pub lambda: f64,
}

struct Forward {
    hidden_pre: Array2<f64>,
    hidden_act: Array2<f64>,
    probs: Array2<f64>,
}

impl MlpObjective {
    pub fn new(shard: DataShard, layout: MlpLayout, lambda: f64) -> Self {
        MlpObjective {
            shard,
            layout,
            lambda,
        }
    }

    pub fn dim(&self) -> usize {
        self.layout.dim()
    }

    fn views<'a>(
        &self,
        params: &'a [f64],
    ) -> (
        ArrayView2<'a, f64>,
        ArrayView1<'a, f64>,
        ArrayView2<'a, f64>,
        ArrayView1<'a, f64>,
    ) {
        let l = &self.layout;
        let w1 = ArrayView2::from_shape((l.hidden, l.input), &params[l.w1_range()]).unwrap();
        let b1 = ArrayView1::from(&params[l.b1_range()]);
        let w2 = ArrayView2::from_shape((l.output, l.hidden), &params[l.w2_range()]).unwrap();
        let b2 = ArrayView1::from(&params[l.b2_range()]);
        (w1, b1, w2, b2)
    }

    fn forward(&self, params: &[f64], x: &ArrayView2<'_, f64>) -> Forward {
        let (w1, b1, w2, b2) = self.views(params);
        let mut hidden_pre = x.dot(&w1.t());
        hidden_pre += &b1;
        let hidden_act = hidden_pre.mapv(|z| if z > 0.0 { z } else { 0.0 });
        let mut probs = hidden_act.dot(&w2.t());
        probs += &b2;
        for mut row in probs.rows_mut() {
            softmax_in_place(row.as_slice_mut().expect("logits are contiguous"));
        }
        Forward {
            hidden_pre,
            hidden_act,
            probs,
        }
    }

    fn cross_entropy(probs: &Array2<f64>, labels: &ArrayView2<'_, f64>) -> f64 {
        let mut total = 0.0;
        for (p_row, y_row) in probs.rows().into_iter().zip(labels.rows()) {
            for (p, y) in p_row.iter().zip(y_row) {
                if *y != 0.0 {
                    total -= y * p.max(f64::MIN_POSITIVE).ln();
                }
            }
        }
        total
    }

    pub fn loss(&self, params: &[f64]) -> f64 {
        let fwd = self.forward(params, &self.shard.features.view());
        let scale = 1.0 / self.shard.total_samples as f64;
        let reg: f64 = params.iter().map(|t| t * t).sum();
        scale * Self::cross_entropy(&fwd.probs, &self.shard.labels.view())
            + self.shard.weight() * 0.5 * self.lambda * reg
    }

    pub fn loss_and_gradient(&self, params: &[f64]) -> (f64, Vec<f64>) {
        let x = self.shard.features.view();
        let y = self.shard.labels.view();
        let scale = 1.0 / self.shard.total_samples as f64;
        let fwd = self.forward(params, &x);
        let cross_entropy = Self::cross_entropy(&fwd.probs, &y);
        let grad = self.backward(params, &x, &y, &fwd, scale);
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
        let fwd = self.forward(params, &x.view());
        let scale = self.shard.len() as f64 / (self.shard.total_samples as f64 * rows.len() as f64);
        Ok(self.backward(params, &x.view(), &y.view(), &fwd, scale))
    }

    /// Backpropagation. `scale` multiplies the data term; the regularizer
    /// `weight·λ·params` is always exact.
    fn backward(
        &self,
        params: &[f64],
        x: &ArrayView2<'_, f64>,
        y: &ArrayView2<'_, f64>,
        fwd: &Forward,
        scale: f64,
    ) -> Vec<f64> {
        let (_, _, w2, _) = self.views(params);
        let delta_out = &fwd.probs - y; // N×C
        let g_w2 = delta_out.t().dot(&fwd.hidden_act); // C×H
        let g_b2 = delta_out.sum_axis(Axis(0)); // C

        let mut delta_hidden = delta_out.dot(&w2); // N×H
        ndarray::Zip::from(&mut delta_hidden)
            .and(&fwd.hidden_pre)
            .for_each(|d, &z| {
                if z <= 0.0 {
                    *d = 0.0;
                }
            });
        let g_w1 = delta_hidden.t().dot(x); // H×I
        let g_b1 = delta_hidden.sum_axis(Axis(0)); // H

        let l = &self.layout;
        let reg_weight = self.shard.weight() * self.lambda;
        let mut grad = vec![0.0; l.dim()];
        fill(&mut grad[l.w1_range()], g_w1.iter(), scale);
        fill(&mut grad[l.b1_range()], g_b1.iter(), scale);
        fill(&mut grad[l.w2_range()], g_w2.iter(), scale);
        fill(&mut grad[l.b2_range()], g_b2.iter(), scale);
        for (g, t) in grad.iter_mut().zip(params) {
            *g += reg_weight * t;
        }
        grad
    }

    pub fn accuracy(&self, params: &[f64], samples: &DataShard) -> f64 {
        let fwd = self.forward(params, &samples.features.view());
        let mut correct = 0usize;
        for (p_row, y_row) in fwd.probs.rows().into_iter().zip(samples.labels.rows()) {
            if argmax(p_row.iter().copied()) == argmax(y_row.iter().copied()) {
                correct += 1;
            }
        }
        correct as f64 / samples.len() as f64
    }
}

fn fill<'a>(dst: &mut [f64], src: impl Iterator<Item = &'a f64>, scale: f64) {
    for (d, s) in dst.iter_mut().zip(src) {
        *d = scale * s;
    }
}
