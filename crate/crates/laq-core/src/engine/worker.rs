//! Worker side of the loop: gradient computation, candidate quantization,
//! and the skip decision. The compute phase never mutates worker state, so
//! the driver can abort a round (stop condition) without corrupting clocks.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

use crate::codec::{decode_innovation, quantize_innovation, QuantizedInnovation, WireMessage};
use crate::criterion::{should_skip, SkipConfig, WorkerState};
use crate::losses::WorkerObjective;

use super::server::Upload;
use super::{EngineError, RunConfig};

/// Everything a worker carries between iterations.
pub struct WorkerRuntime {
    pub state: WorkerState,
    sampler: Option<MinibatchSampler>,
}

impl WorkerRuntime {
    pub fn new(cfg: &RunConfig, worker_id: usize, dim: usize, shard_len: usize) -> Self {
        let sampler = if cfg.algorithm.is_stochastic() {
            Some(MinibatchSampler::new(
                shard_len,
                cfg.minibatch.min(shard_len),
                cfg.seed,
                worker_id,
            ))
        } else {
            None
        };
        WorkerRuntime {
            state: WorkerState::new(dim, cfg.xi.len()),
            sampler,
        }
    }
}

/// Seeded without-replacement sampling: a shuffled pass over the shard per
/// epoch, reshuffling when fewer than a full batch remains.
struct MinibatchSampler {
    order: Vec<usize>,
    cursor: usize,
    batch: usize,
    rng: ChaCha20Rng,
}

impl MinibatchSampler {
    fn new(shard_len: usize, batch: usize, seed: u64, worker_id: usize) -> Self {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        rng.set_stream(worker_id as u64 + 1);
        let mut order: Vec<usize> = (0..shard_len).collect();
        order.shuffle(&mut rng);
        MinibatchSampler {
            order,
            cursor: 0,
            batch: batch.max(1),
            rng,
        }
    }

    fn next_batch(&mut self) -> Vec<usize> {
        if self.cursor + self.batch > self.order.len() {
            self.order.shuffle(&mut self.rng);
            self.cursor = 0;
        }
        let batch = self.order[self.cursor..self.cursor + self.batch].to_vec();
        self.cursor += self.batch;
        batch
    }
}

/// The outcome of a worker's compute phase. `new_quantization` and
/// `new_error_sq` are committed via `WorkerState::on_upload` only if the
/// driver goes through with the round.
pub struct RoundPlan {
    pub upload: bool,
    pub message: Option<Upload>,
    pub new_quantization: Vec<f64>,
    pub new_error_sq: f64,
    pub loss: f64,
    pub gradient: Vec<f64>,
    /// `∇f_m − Q_m(θ^k)` of this round's candidate; zero for exact modes.
    pub error_vec: Option<Vec<f64>>,
    /// `Q_m(θ̂^{k−1}) − Q_m(θ^k)` when the worker skips, for diagnostics.
    pub skipped_delta: Option<Vec<f64>>,
}

/// One worker's round at iteration `k` for broadcast `theta`.
///
/// The caller must have pushed this round's `‖θ^k − θ^{k−1}‖²` into the
/// worker's diff history already; the lazy decision reads it as the `d = 1`
/// term. Iteration 0 always uploads to initialize the server's stored
/// quantizations.
#[allow(clippy::too_many_arguments)]
pub fn worker_round(
    worker_id: usize,
    iteration: usize,
    theta: &[f64],
    runtime: &mut WorkerRuntime,
    objective: &WorkerObjective,
    cfg: &RunConfig,
    skip_cfg: &SkipConfig,
    want_diagnostics: bool,
) -> Result<RoundPlan, EngineError> {
    let algorithm = cfg.algorithm;
    let (loss, gradient) = if algorithm.is_stochastic() {
        let batch = runtime
            .sampler
            .as_mut()
            .expect("stochastic runtimes carry a sampler")
            .next_batch();
        let loss = objective.loss(theta)?;
        let gradient = objective.minibatch_gradient(theta, &batch)?;
        (loss, gradient)
    } else {
        objective.loss_and_gradient(theta)?
    };
    if !loss.is_finite() || gradient.iter().any(|g| !g.is_finite()) {
        return Err(EngineError::Diverged { iteration, loss });
    }

    let stored = &runtime.state.stored_quantization;
    let (delta, new_error_sq, wire): (Vec<f64>, f64, Option<QuantizedInnovation>) =
        if algorithm.is_quantized() {
            let qi = quantize_innovation(&gradient, stored, cfg.bits)?;
            // Commit to the binary32 radius the receiver will see, so both
            // ends reconstruct bit-identical state.
            let committed = QuantizedInnovation {
                radius: qi.radius as f32 as f64,
                codes: qi.codes,
                bits: qi.bits,
            };
            let delta = decode_innovation(&committed);
            let err_sq = gradient
                .iter()
                .zip(stored.iter().zip(&delta))
                .map(|(g, (s, d))| {
                    let e = g - (s + d);
                    e * e
                })
                .sum();
            (delta, err_sq, Some(committed))
        } else {
            // Exact modes transmit the raw innovation; quantization error 0.
            let delta = gradient.iter().zip(stored).map(|(g, s)| g - s).collect();
            (delta, 0.0, None)
        };

    let upload = if algorithm.is_lazy() && iteration > 0 {
        let delta_sq: f64 = delta.iter().map(|d| d * d).sum();
        !should_skip(delta_sq, &runtime.state, skip_cfg, new_error_sq)
    } else {
        true
    };

    let new_quantization: Vec<f64> = stored.iter().zip(&delta).map(|(s, d)| s + d).collect();

    let error_vec = if want_diagnostics {
        Some(match &wire {
            Some(_) => gradient
                .iter()
                .zip(&new_quantization)
                .map(|(g, q)| g - q)
                .collect(),
            None => vec![0.0; gradient.len()],
        })
    } else {
        None
    };
    let skipped_delta = if want_diagnostics && !upload {
        Some(delta.iter().map(|d| -d).collect())
    } else {
        None
    };

    let message = if upload {
        Some(match wire {
            Some(committed) => Upload::Quantized(WireMessage::from_innovation(
                worker_id as u16,
                iteration as u32,
                &committed,
            )?),
            None => Upload::Exact {
                worker_id: worker_id as u16,
                iteration: iteration as u32,
                delta,
            },
        })
    } else {
        None
    };

    Ok(RoundPlan {
        upload,
        message,
        new_quantization,
        new_error_sq,
        loss,
        gradient,
        error_vec,
        skipped_delta,
    })
}
