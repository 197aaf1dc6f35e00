//! The skip-communication rule.
//!
//! A worker skips its upload at iteration `k` when the squared distance
//! between its stored quantization and this round's candidate quantization
//! falls under a threshold built from recent global parameter movement and
//! the two quantization-error norms:
//!
//! ```text
//! ‖Q_stored − Q_candidate‖₂² ≤ (1/(α²M²))·Σ_{d=1}^D ξ_d·‖θ^{k+1−d} − θ^{k−d}‖₂²
//!                              + 3·(‖ε_current‖₂² + ‖ε_stored‖₂²)
//! ```
//!
//! subject to the staleness clock `t_m ≤ t̄`. Each worker owns one
//! [`WorkerState`]; the parameter-difference ring buffer is refreshed on
//! every broadcast (skip rounds included), so the `d = 1` entry is always
//! the diff between the current and the previous broadcast.

use std::collections::VecDeque;

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum CriterionError {
    #[error("stepsize alpha must be positive, got {0}")]
    NonPositiveAlpha(f64),
    #[error("need at least one worker")]
    NoWorkers,
    #[error("history depth {depth} exceeds max staleness {max_staleness}")]
    DepthExceedsStaleness { depth: usize, max_staleness: usize },
    #[error("xi[{index}] = {value} is negative")]
    NegativeXi { index: usize, value: f64 },
}

/// Parameters of the skip rule: stepsize α, worker count M, weights ξ_1..ξ_D
/// and the staleness bound t̄.
#[derive(Debug, Clone, PartialEq)]
pub struct SkipConfig {
    pub alpha: f64,
    pub num_workers: usize,
    pub xi: Vec<f64>,
    pub max_staleness: usize,
}

impl SkipConfig {
    /// Enforces α > 0, M ≥ 1, ξ_d ≥ 0 and D ≤ t̄.
    pub fn validate(&self) -> Result<(), CriterionError> {
        if self.alpha.is_nan() || self.alpha <= 0.0 {
            return Err(CriterionError::NonPositiveAlpha(self.alpha));
        }
        if self.num_workers == 0 {
            return Err(CriterionError::NoWorkers);
        }
        if self.xi.len() > self.max_staleness {
            return Err(CriterionError::DepthExceedsStaleness {
                depth: self.xi.len(),
                max_staleness: self.max_staleness,
            });
        }
        for (index, &value) in self.xi.iter().enumerate() {
            if value.is_nan() || value < 0.0 {
                return Err(CriterionError::NegativeXi { index, value });
            }
        }
        Ok(())
    }

    pub fn depth(&self) -> usize {
        self.xi.len()
    }

    /// True when ξ_1 ≥ ξ_2 ≥ … ≥ ξ_D, the hypothesis of the per-worker
    /// upload bound.
    pub fn xi_non_increasing(&self) -> bool {
        self.xi.windows(2).all(|w| w[0] >= w[1])
    }
}

/// Per-worker memory: the last committed quantization, its error norm, the
/// staleness clock, and the D most recent squared parameter differences.
#[derive(Debug, Clone, PartialEq)]
pub struct WorkerState {
    pub stored_quantization: Vec<f64>,
    pub stored_error_sq: f64,
    pub clock: usize,
    diff_history: VecDeque<f64>,
}

impl WorkerState {
    /// Zero-initialized state: zero quantization, zero error, zero clock and
    /// a ring buffer of `depth` zeros.
    pub fn new(dim: usize, depth: usize) -> Self {
        WorkerState {
            stored_quantization: vec![0.0; dim],
            stored_error_sq: 0.0,
            clock: 0,
            diff_history: std::iter::repeat_n(0.0, depth).collect(),
        }
    }

    /// Shifts the newest squared parameter difference ‖θ^k − θ^{k−1}‖₂² into
    /// the ring buffer, evicting the oldest. Called once per broadcast,
    /// before the skip decision, whether or not the round ends in an upload.
    pub fn record_diff(&mut self, diff_sq: f64) {
        if self.diff_history.is_empty() {
            return;
        }
        self.diff_history.pop_back();
        self.diff_history.push_front(diff_sq);
    }

    /// Commits an upload: replaces the stored quantization and error norm
    /// and resets the clock.
    pub fn on_upload(&mut self, new_quantization: Vec<f64>, new_error_sq: f64) {
        self.stored_quantization = new_quantization;
        self.stored_error_sq = new_error_sq;
        self.clock = 0;
    }

    /// Records a skipped round: the stored quantization is reused and the
    /// staleness clock advances.
    pub fn on_skip(&mut self) {
        self.clock += 1;
    }

    /// Squared diffs ordered newest first, i.e. entry `d−1` is
    /// ‖θ^{k+1−d} − θ^{k−d}‖₂².
    pub fn diff_history(&self) -> impl Iterator<Item = f64> + '_ {
        self.diff_history.iter().copied()
    }
}

/// Right-hand side of the skip inequality:
/// `(1/(α²M²))·Σ_d ξ_d·diff_d + 3·(current_error_sq + stored_error_sq)`.
pub fn rhs_threshold(state: &WorkerState, cfg: &SkipConfig, current_error_sq: f64) -> f64 {
    let scale = 1.0 / (cfg.alpha * cfg.alpha * (cfg.num_workers * cfg.num_workers) as f64);
    let weighted: f64 = cfg
        .xi
        .iter()
        .zip(state.diff_history())
        .map(|(xi, diff)| xi * diff)
        .sum();
    scale * weighted + 3.0 * (current_error_sq + state.stored_error_sq)
}

/// The full decision: skip iff the innovation is small enough *and* the
/// clock has not passed t̄. A worker whose clock equals t̄ may still skip;
/// at t̄ + 1 the upload is forced.
pub fn should_skip(
    candidate_delta_sq: f64,
    state: &WorkerState,
    cfg: &SkipConfig,
    current_error_sq: f64,
) -> bool {
    candidate_delta_sq <= rhs_threshold(state, cfg, current_error_sq)
        && state.clock <= cfg.max_staleness
}
