//! The distributed-training loop: one server, M workers, six algorithms.
//!
//! Per iteration the server broadcasts θ^k; every worker computes its
//! (mini-batch) gradient and, in the quantized modes, a candidate b-bit
//! quantization of the gradient innovation. Lazy modes evaluate the skip
//! rule; the selected workers upload, and the server refines its running
//! aggregate `∇^k = ∇^{k−1} + Σ δQ` before stepping `θ^{k+1} = θ^k − α∇^k`.
//!
//! | algorithm | gradient   | codec | skip rule |
//! |-----------|------------|-------|-----------|
//! | `gd`      | full batch | —     | —         |
//! | `qgd`     | full batch | b-bit | —         |
//! | `lag`     | full batch | —     | yes       |
//! | `laq`     | full batch | b-bit | yes       |
//! | `sgd`     | mini-batch | —     | —         |
//! | `slaq`    | mini-batch | b-bit | yes       |
//!
//! Runs are deterministic under `RunConfig::seed`: worker rounds may execute
//! in parallel, but results are reduced in ascending worker order.

mod server;
mod worker;

pub use server::{server_apply, ServerState, Upload};
pub use worker::{worker_round, RoundPlan, WorkerRuntime};

use std::collections::VecDeque;

use rayon::prelude::*;
use thiserror::Error;

use crate::codec::CodecError;
use crate::criterion::{CriterionError, SkipConfig};
use crate::data::{Dataset, PartitionPlan, QuadraticProblem};
use crate::losses::{
    glorot_init, LogisticObjective, LossError, MlpLayout, MlpObjective, WorkerObjective,
};
use crate::metrics::{lyapunov, per_upload_bits, RunEcho, TelemetryLog, TelemetryRecord};

/// Abort threshold for the divergence guard.
const DIVERGENCE_CAP: f64 = 1e12;
/// Absolute slack for the per-iteration descent diagnostic.
const DESCENT_SLACK: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Criterion(#[from] CriterionError),
    #[error(transparent)]
    Loss(#[from] LossError),
    #[error(transparent)]
    Codec(#[from] CodecError),
    #[error("divergence at iteration {iteration}: loss = {loss}")]
    Diverged { iteration: usize, loss: f64 },
    #[error("duplicate or out-of-order message from worker {worker_id} at iteration {iteration}")]
    DuplicateWorker { worker_id: u16, iteration: usize },
    #[error("message from unknown worker {worker_id}")]
    UnknownWorker { worker_id: u16 },
    #[error("vector has {got} coordinates, expected {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("Lyapunov tracking requires a known optimum value")]
    OptimumRequired,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Algorithm {
    Gd,
    Qgd,
    Lag,
    Laq,
    Sgd,
    Slaq,
}

impl Algorithm {
    pub const ALL: [Algorithm; 6] = [
        Algorithm::Gd,
        Algorithm::Qgd,
        Algorithm::Lag,
        Algorithm::Laq,
        Algorithm::Sgd,
        Algorithm::Slaq,
    ];

    /// Ships b-bit codes instead of raw floats.
    pub fn is_quantized(self) -> bool {
        matches!(self, Algorithm::Qgd | Algorithm::Laq | Algorithm::Slaq)
    }

    /// Applies the skip rule.
    pub fn is_lazy(self) -> bool {
        matches!(self, Algorithm::Lag | Algorithm::Laq | Algorithm::Slaq)
    }

    /// Uses seeded mini-batch gradients.
    pub fn is_stochastic(self) -> bool {
        matches!(self, Algorithm::Sgd | Algorithm::Slaq)
    }

    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Gd => "gd",
            Algorithm::Qgd => "qgd",
            Algorithm::Lag => "lag",
            Algorithm::Laq => "laq",
            Algorithm::Sgd => "sgd",
            Algorithm::Slaq => "slaq",
        }
    }
}

impl std::str::FromStr for Algorithm {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "gd" => Ok(Algorithm::Gd),
            "qgd" => Ok(Algorithm::Qgd),
            "lag" => Ok(Algorithm::Lag),
            "laq" => Ok(Algorithm::Laq),
            "sgd" => Ok(Algorithm::Sgd),
            "slaq" => Ok(Algorithm::Slaq),
            other => Err(format!("unknown algorithm {other:?}")),
        }
    }
}

/// Everything one run needs besides the problem itself.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub algorithm: Algorithm,
    pub alpha: f64,
    pub bits: u32,
    /// ξ_1..ξ_D; its length is the history depth D.
    pub xi: Vec<f64>,
    /// t̄: a worker whose clock passes this is forced to upload.
    pub max_staleness: usize,
    pub max_iterations: usize,
    /// Stop once `f(θ^k) − f(θ*) ≤ target` (requires a known optimum).
    pub target_residual: Option<f64>,
    /// Mini-batch size for the stochastic modes.
    pub minibatch: usize,
    pub seed: u64,
    /// Record the Lyapunov value per iteration (requires a known optimum).
    pub track_lyapunov: bool,
    /// `Some(L)` enables the per-iteration descent diagnostic with global
    /// smoothness `L` (full-batch modes only).
    pub descent_check: Option<f64>,
}

impl RunConfig {
    pub fn new(algorithm: Algorithm, alpha: f64) -> Self {
        RunConfig {
            algorithm,
            alpha,
            bits: 8,
            xi: Vec::new(),
            max_staleness: 0,
            max_iterations: 100,
            target_residual: None,
            minibatch: 500,
            seed: 0,
            track_lyapunov: false,
            descent_check: None,
        }
    }

    fn skip_config(&self, workers: usize) -> SkipConfig {
        SkipConfig {
            alpha: self.alpha,
            num_workers: workers,
            xi: self.xi.clone(),
            max_staleness: self.max_staleness,
        }
    }

    fn validate(&self, problem: &Problem) -> Result<(), EngineError> {
        if problem.workers.is_empty() {
            return Err(EngineError::InvalidConfig("no workers".into()));
        }
        if problem.workers.len() > u16::MAX as usize {
            return Err(EngineError::InvalidConfig(
                "worker ids are 16-bit on the wire".into(),
            ));
        }
        let dim = problem.dim();
        if dim == 0 {
            return Err(EngineError::InvalidConfig("empty parameter vector".into()));
        }
        for (m, w) in problem.workers.iter().enumerate() {
            if w.dim() != dim {
                return Err(EngineError::InvalidConfig(format!(
                    "worker {m} has dimension {}, expected {dim}",
                    w.dim()
                )));
            }
        }
        if self.alpha.is_nan() || self.alpha <= 0.0 {
            return Err(EngineError::InvalidConfig(format!(
                "stepsize {} must be positive",
                self.alpha
            )));
        }
        if self.algorithm.is_quantized() && !(1..=32).contains(&self.bits) {
            return Err(EngineError::InvalidConfig(format!(
                "bits = {} out of range 1..=32",
                self.bits
            )));
        }
        if self.algorithm.is_lazy() {
            self.skip_config(problem.workers.len()).validate()?;
        }
        if self.algorithm.is_stochastic() && self.minibatch == 0 {
            return Err(EngineError::InvalidConfig(
                "stochastic modes need a positive minibatch size".into(),
            ));
        }
        if (self.track_lyapunov || self.target_residual.is_some()) && problem.fstar.is_none() {
            return Err(EngineError::OptimumRequired);
        }
        if self.descent_check.is_some() && self.algorithm.is_stochastic() {
            return Err(EngineError::InvalidConfig(
                "the descent diagnostic is a full-batch check".into(),
            ));
        }
        Ok(())
    }
}

/// A concrete distributed problem: one objective per worker plus whatever is
/// known about the optimum.
#[derive(Debug, Clone)]
pub struct Problem {
    pub workers: Vec<WorkerObjective>,
    pub initial_params: Vec<f64>,
    /// `f(θ*)` when known (closed form or reference run); enables residual
    /// stop rules and Lyapunov tracking.
    pub fstar: Option<f64>,
}

impl Problem {
    pub fn dim(&self) -> usize {
        self.initial_params.len()
    }

    pub fn num_workers(&self) -> usize {
        self.workers.len()
    }

    /// Synthetic quadratic problem; the optimum is known in closed form.
    pub fn from_quadratic(problem: &QuadraticProblem) -> Self {
        Problem {
            workers: problem
                .terms
                .iter()
                .cloned()
                .map(WorkerObjective::Quadratic)
                .collect(),
            initial_params: vec![0.0; problem.dim()],
            fstar: Some(problem.fstar),
        }
    }

    /// Multiclass logistic regression over a partitioned dataset, starting
    /// from θ = 0.
    pub fn logistic(dataset: &Dataset, plan: &PartitionPlan, lambda: f64) -> Self {
        let workers = dataset
            .shards(plan)
            .into_iter()
            .map(|shard| WorkerObjective::Logistic(LogisticObjective::new(shard, lambda)))
            .collect::<Vec<_>>();
        let dim = dataset.classes * dataset.feature_dim();
        Problem {
            workers,
            initial_params: vec![0.0; dim],
            fstar: None,
        }
    }

    /// One-hidden-layer ReLU network over a partitioned dataset with seeded
    /// Glorot initialization.
    pub fn mlp(
        dataset: &Dataset,
        plan: &PartitionPlan,
        hidden: usize,
        lambda: f64,
        init_seed: u64,
    ) -> Self {
        let layout = MlpLayout::new(dataset.feature_dim(), hidden, dataset.classes);
        let workers = dataset
            .shards(plan)
            .into_iter()
            .map(|shard| WorkerObjective::Mlp(MlpObjective::new(shard, layout, lambda)))
            .collect::<Vec<_>>();
        Problem {
            workers,
            initial_params: glorot_init(layout, init_seed),
            fstar: None,
        }
    }

    pub fn with_fstar(mut self, fstar: f64) -> Self {
        self.fstar = Some(fstar);
        self
    }

    pub fn global_loss(&self, params: &[f64]) -> Result<f64, LossError> {
        self.workers.iter().map(|w| w.loss(params)).sum()
    }

    pub fn global_gradient(&self, params: &[f64]) -> Result<Vec<f64>, LossError> {
        let mut sum = vec![0.0; self.dim()];
        for w in &self.workers {
            for (acc, g) in sum.iter_mut().zip(w.gradient(params)?) {
                *acc += g;
            }
        }
        Ok(sum)
    }

    /// Per-worker smoothness constants (exact for quadratics, bounds for
    /// logistic).
    pub fn worker_smoothness(&self) -> Result<Vec<f64>, LossError> {
        self.workers
            .iter()
            .map(|w| w.smoothness_constant())
            .collect()
    }

    /// `Σ_m L_m`, an upper bound on the global smoothness constant.
    pub fn smoothness_sum(&self) -> Result<f64, LossError> {
        Ok(self.worker_smoothness()?.iter().sum())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    TargetReached,
    MaxIterations,
}

#[derive(Debug)]
pub struct RunOutcome {
    pub params: Vec<f64>,
    pub telemetry: TelemetryLog,
    pub stop: StopReason,
    /// Violations of the descent diagnostic, if it was enabled.
    pub descent_violations: usize,
}

/// Executes one full run. Identical configs (including the seed) produce
/// bit-identical telemetry.
pub fn run(cfg: &RunConfig, problem: &Problem) -> Result<RunOutcome, EngineError> {
    cfg.validate(problem)?;
    let workers = problem.num_workers();
    let dim = problem.dim();
    let skip_cfg = cfg.skip_config(workers);
    let want_diag = cfg.descent_check.is_some();

    let mut server = ServerState::new(workers, problem.initial_params.clone());
    let mut runtimes: Vec<WorkerRuntime> = problem
        .workers
        .iter()
        .enumerate()
        .map(|(m, w)| WorkerRuntime::new(cfg, m, dim, w.num_samples()))
        .collect();

    let depth = cfg.xi.len();
    let mut history: VecDeque<Vec<f64>> =
        std::iter::repeat_n(server.params.clone(), depth + 1).collect();
    let mut prev_params = server.params.clone();

    let mut records: Vec<TelemetryRecord> = Vec::new();
    let mut per_worker_uploads = vec![0u64; workers];
    let mut cumulative_uploads = 0u64;
    let mut cumulative_bits = 0u64;
    let mut pending_descent: Option<(f64, f64)> = None;
    let mut descent_violations = 0usize;
    let stop;

    let mut k = 0usize;
    loop {
        let theta = server.params.clone();
        let diff_sq: f64 = theta
            .iter()
            .zip(&prev_params)
            .map(|(a, b)| (a - b) * (a - b))
            .sum();
        for rt in &mut runtimes {
            rt.state.record_diff(diff_sq);
        }

        let plans: Vec<RoundPlan> = runtimes
            .par_iter_mut()
            .zip(problem.workers.par_iter())
            .enumerate()
            .map(|(m, (rt, obj))| worker_round(m, k, &theta, rt, obj, cfg, &skip_cfg, want_diag))
            .collect::<Result<Vec<_>, EngineError>>()?;

        let loss: f64 = plans.iter().map(|p| p.loss).sum();
        if !loss.is_finite() || loss > DIVERGENCE_CAP {
            return Err(EngineError::Diverged { iteration: k, loss });
        }
        let residual = problem.fstar.map(|f| loss - f);

        let mut grad_sum = vec![0.0; dim];
        for plan in &plans {
            for (acc, g) in grad_sum.iter_mut().zip(&plan.gradient) {
                *acc += g;
            }
        }
        let grad_norm = grad_sum.iter().map(|g| g * g).sum::<f64>().sqrt();

        let lyap = if cfg.track_lyapunov {
            let snapshots: Vec<Vec<f64>> = history.iter().cloned().collect();
            Some(lyapunov(
                &snapshots,
                residual.expect("validated: fstar is known"),
                &cfg.xi,
                cfg.alpha,
            ))
        } else {
            None
        };

        if let Some((prev_loss, bound)) = pending_descent.take() {
            if loss - prev_loss > bound + DESCENT_SLACK {
                descent_violations += 1;
            }
        }

        let clocks: Vec<usize> = runtimes.iter().map(|rt| rt.state.clock).collect();
        let target_hit = match (residual, cfg.target_residual) {
            (Some(r), Some(t)) => r <= t,
            _ => false,
        };
        if target_hit || k == cfg.max_iterations {
            records.push(TelemetryRecord {
                iteration: k,
                loss,
                loss_residual: residual,
                grad_norm,
                uploads_this_round: 0,
                cumulative_uploads,
                cumulative_bits,
                lyapunov: lyap,
                clocks,
            });
            stop = if target_hit {
                StopReason::TargetReached
            } else {
                StopReason::MaxIterations
            };
            break;
        }

        // Diagnostic sums must be read before the plans are consumed.
        let (eps_sum, skipped_sum) = if want_diag {
            let mut eps = vec![0.0; dim];
            let mut skipped = vec![0.0; dim];
            for plan in &plans {
                if let Some(e) = &plan.error_vec {
                    for (acc, v) in eps.iter_mut().zip(e) {
                        *acc += v;
                    }
                }
                if let Some(s) = &plan.skipped_delta {
                    for (acc, v) in skipped.iter_mut().zip(s) {
                        *acc += v;
                    }
                }
            }
            (eps, skipped)
        } else {
            (Vec::new(), Vec::new())
        };

        let mut messages = Vec::new();
        let mut uploads_this_round = 0usize;
        for (m, plan) in plans.into_iter().enumerate() {
            if plan.upload {
                runtimes[m]
                    .state
                    .on_upload(plan.new_quantization, plan.new_error_sq);
                messages.push(plan.message.expect("uploading plans carry a message"));
                uploads_this_round += 1;
                per_worker_uploads[m] += 1;
                cumulative_bits += per_upload_bits(cfg.algorithm, dim, cfg.bits);
            } else {
                runtimes[m].state.on_skip();
            }
        }
        cumulative_uploads += uploads_this_round as u64;

        server_apply(&mut server, &messages, cfg.alpha)?;

        #[cfg(debug_assertions)]
        for (m, rt) in runtimes.iter().enumerate() {
            debug_assert_eq!(
                server.stored[m], rt.state.stored_quantization,
                "worker {m} desynchronized from the server at iteration {k}"
            );
        }

        if let Some(l_smooth) = cfg.descent_check {
            let step_sq: f64 = server
                .params
                .iter()
                .zip(&theta)
                .map(|(a, b)| (a - b) * (a - b))
                .sum();
            let skipped_norm_sq: f64 = skipped_sum.iter().map(|v| v * v).sum();
            let eps_norm_sq: f64 = eps_sum.iter().map(|v| v * v).sum();
            let delta_laq = -0.5 * cfg.alpha * grad_norm * grad_norm
                + cfg.alpha * skipped_norm_sq
                + (0.5 * l_smooth - 0.5 / cfg.alpha) * step_sq;
            pending_descent = Some((loss, delta_laq + cfg.alpha * eps_norm_sq));
        }

        records.push(TelemetryRecord {
            iteration: k,
            loss,
            loss_residual: residual,
            grad_norm,
            uploads_this_round,
            cumulative_uploads,
            cumulative_bits,
            lyapunov: lyap,
            clocks: runtimes.iter().map(|rt| rt.state.clock).collect(),
        });

        history.pop_front();
        history.push_back(server.params.clone());
        prev_params = theta;
        k += 1;
    }

    let echo = RunEcho {
        algorithm: cfg.algorithm.name().to_string(),
        alpha: cfg.alpha,
        bits: cfg.bits,
        history_depth: depth,
        xi: cfg.xi.clone(),
        max_staleness: cfg.max_staleness,
        workers,
        minibatch: if cfg.algorithm.is_stochastic() {
            cfg.minibatch
        } else {
            0
        },
        seed: cfg.seed,
        dim,
        max_iterations: cfg.max_iterations,
        target_residual: cfg.target_residual,
    };
    Ok(RunOutcome {
        params: server.params,
        telemetry: TelemetryLog {
            config: echo,
            records,
            per_worker_uploads,
        },
        stop,
        descent_violations,
    })
}

/// Long plain-GD reference run used to pin `f(θ*)` for problems without a
/// closed-form optimum. Stops early once `‖∇f‖ ≤ grad_tol`.
pub fn reference_minimum(
    problem: &Problem,
    alpha: f64,
    max_iterations: usize,
    grad_tol: f64,
) -> Result<(f64, Vec<f64>), EngineError> {
    let mut params = problem.initial_params.clone();
    for _ in 0..max_iterations {
        let results: Vec<(f64, Vec<f64>)> = problem
            .workers
            .par_iter()
            .map(|w| w.loss_and_gradient(&params))
            .collect::<Result<Vec<_>, _>>()?;
        let mut grad = vec![0.0; params.len()];
        let mut loss = 0.0;
        for (l, g) in &results {
            loss += l;
            for (acc, v) in grad.iter_mut().zip(g) {
                *acc += v;
            }
        }
        if !loss.is_finite() || loss > DIVERGENCE_CAP {
            return Err(EngineError::Diverged { iteration: 0, loss });
        }
        let grad_norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
        if grad_norm <= grad_tol {
            break;
        }
        for (p, g) in params.iter_mut().zip(&grad) {
            *p -= alpha * g;
        }
    }
    let loss = problem.global_loss(&params)?;
    Ok((loss, params))
}

/// One check of the parameter-recipe validator.
#[derive(Debug, Clone)]
pub struct RecipeCheck {
    pub name: &'static str,
    pub ok: bool,
    pub detail: String,
}

#[derive(Debug, Clone)]
pub struct RecipeReport {
    pub checks: Vec<RecipeCheck>,
}

impl RecipeReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.ok)
    }
}

/// Advisory validation of `(α, ξ)` against the sufficient conditions with
/// the simple choice ρ₁ = 1/2, ρ₂ = 1: `Σξ_d ≤ 1/16` and `α ≤ 1/(8L)`.
/// Failures are warnings, not errors: the reference experiments themselves
/// run `Σξ = 0.8`.
pub fn validate_recipe(alpha: f64, xi: &[f64], smoothness: f64) -> RecipeReport {
    let tol = 1.0 + 1e-9;
    let xi_sum: f64 = xi.iter().sum();
    let xi_bound = 1.0 / 16.0;
    let alpha_bound = 1.0 / (8.0 * smoothness);
    let checks = vec![
        RecipeCheck {
            name: "xi-sum",
            ok: xi_sum <= xi_bound * tol,
            detail: format!("sum(xi) = {xi_sum}, bound = {xi_bound}"),
        },
        RecipeCheck {
            name: "alpha",
            ok: alpha <= alpha_bound * tol,
            detail: format!("alpha = {alpha}, bound 1/(8L) = {alpha_bound}"),
        },
    ];
    RecipeReport { checks }
}

#[cfg(test)]
mod tests;
