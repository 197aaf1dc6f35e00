//! Telemetry, Lyapunov evaluation, bit/upload accounting, convergence-rate
//! fitting, the per-worker upload bound, and CSV export.

use std::io::Write;
use std::path::Path;

use thiserror::Error;

use crate::engine::Algorithm;

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("need at least {need} positive residuals, got {got}")]
    TooFewResiduals { need: usize, got: usize },
    #[error("residual {value} at position {index} is not positive")]
    NonPositiveResidual { index: usize, value: f64 },
    #[error("xi must be non-increasing (xi[{index}] = {value} rises above its predecessor)")]
    NonMonotoneXi { index: usize, value: f64 },
    #[error("{what} expects {expected} entries, got {got}")]
    LengthMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("csv parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("telemetry invariant violated: {0}")]
    Invariant(String),
}

/// The run configuration echoed into every telemetry log and CSV header.
#[derive(Debug, Clone, PartialEq)]
pub struct RunEcho {
    pub algorithm: String,
    pub alpha: f64,
    pub bits: u32,
    pub history_depth: usize,
    pub xi: Vec<f64>,
    pub max_staleness: usize,
    pub workers: usize,
    pub minibatch: usize,
    pub seed: u64,
    pub dim: usize,
    pub max_iterations: usize,
    pub target_residual: Option<f64>,
}

impl RunEcho {
    fn comment_lines(&self) -> Vec<String> {
        let xi = self
            .xi
            .iter()
            .map(|x| x.to_string())
            .collect::<Vec<_>>()
            .join(";");
        vec![
            format!("# algorithm={}", self.algorithm),
            format!("# alpha={}", self.alpha),
            format!("# bits={}", self.bits),
            format!("# big_d={}", self.history_depth),
            format!("# xi={xi}"),
            format!("# max_staleness={}", self.max_staleness),
            format!("# workers={}", self.workers),
            format!("# minibatch={}", self.minibatch),
            format!("# seed={}", self.seed),
            format!("# dim={}", self.dim),
            format!("# max_iterations={}", self.max_iterations),
            format!(
                "# target_residual={}",
                self.target_residual
                    .map(|t| t.to_string())
                    .unwrap_or_default()
            ),
        ]
    }
}

/// One telemetry row. Rows `0..len−1` describe executed iterations (state at
/// `θ^k` plus that round's uploads); the final row is the closing snapshot
/// with `uploads_this_round = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct TelemetryRecord {
    pub iteration: usize,
    pub loss: f64,
    pub loss_residual: Option<f64>,
    pub grad_norm: f64,
    pub uploads_this_round: usize,
    pub cumulative_uploads: u64,
    pub cumulative_bits: u64,
    pub lyapunov: Option<f64>,
    /// Post-round staleness clock of every worker; `0` means the worker
    /// uploaded in this round.
    pub clocks: Vec<usize>,
}

pub const CSV_HEADER: &str = "iteration,loss,loss_residual,grad_norm,uploads_this_round,\
cumulative_uploads,cumulative_bits,lyapunov,clocks";

#[derive(Debug, Clone, PartialEq)]
pub struct TelemetryLog {
    pub config: RunEcho,
    pub records: Vec<TelemetryRecord>,
    pub per_worker_uploads: Vec<u64>,
}

impl TelemetryLog {
    /// Number of executed iterations (the final record is a snapshot).
    pub fn iterations(&self) -> usize {
        self.records.len().saturating_sub(1)
    }

    pub fn final_record(&self) -> &TelemetryRecord {
        self.records
            .last()
            .expect("a log always holds the initial snapshot")
    }

    pub fn total_uploads(&self) -> u64 {
        self.final_record().cumulative_uploads
    }

    pub fn total_bits(&self) -> u64 {
        self.final_record().cumulative_bits
    }

    /// Residual sequence over executed iterations (available only when the
    /// optimum was known to the run).
    pub fn residuals(&self) -> Option<Vec<f64>> {
        self.records.iter().map(|r| r.loss_residual).collect()
    }

    /// Iterations in which `worker` uploaded, recovered from the clock
    /// snapshots: a post-round clock of zero means an upload happened.
    pub fn upload_iterations(&self, worker: usize) -> Vec<usize> {
        let rounds = &self.records[..self.records.len().saturating_sub(1)];
        rounds
            .iter()
            .filter(|r| r.clocks[worker] == 0)
            .map(|r| r.iteration)
            .collect()
    }

    /// Largest number of consecutive skipped rounds for `worker`, counting
    /// the trailing stretch after its last upload.
    pub fn max_upload_gap(&self, worker: usize) -> usize {
        let uploads = self.upload_iterations(worker);
        let rounds = self.iterations();
        let mut max_gap = 0usize;
        let mut prev: Option<usize> = None;
        for &k in &uploads {
            if let Some(p) = prev {
                max_gap = max_gap.max(k - p - 1);
            } else {
                max_gap = max_gap.max(k);
            }
            prev = Some(k);
        }
        match prev {
            Some(p) => max_gap.max(rounds - 1 - p),
            None => rounds,
        }
    }

    /// Cross-checks the structural invariants of the log, including that the
    /// cumulative bit counter is recomputable from the upload sequence and
    /// the echoed config alone.
    pub fn validate(&self) -> Result<(), MetricsError> {
        let m = self.config.workers;
        let per_upload: Option<u64> = self
            .config
            .algorithm
            .parse::<Algorithm>()
            .ok()
            .map(|alg| per_upload_bits(alg, self.config.dim, self.config.bits));
        let mut prev_uploads = 0u64;
        let mut prev_bits = 0u64;
        let mut recomputed_uploads = 0u64;
        for (i, r) in self.records.iter().enumerate() {
            if r.uploads_this_round > m {
                return Err(MetricsError::Invariant(format!(
                    "record {i}: uploads_this_round {} exceeds M = {m}",
                    r.uploads_this_round
                )));
            }
            if r.cumulative_uploads < prev_uploads || r.cumulative_bits < prev_bits {
                return Err(MetricsError::Invariant(format!(
                    "record {i}: cumulative counters decreased"
                )));
            }
            if r.clocks.len() != m {
                return Err(MetricsError::Invariant(format!(
                    "record {i}: clock snapshot has {} entries, expected {m}",
                    r.clocks.len()
                )));
            }
            recomputed_uploads += r.uploads_this_round as u64;
            if recomputed_uploads != r.cumulative_uploads {
                return Err(MetricsError::Invariant(format!(
                    "record {i}: cumulative uploads not recomputable from the round counts"
                )));
            }
            if let Some(per) = per_upload {
                if recomputed_uploads * per != r.cumulative_bits {
                    return Err(MetricsError::Invariant(format!(
                        "record {i}: cumulative bits {} disagree with accounting {}",
                        r.cumulative_bits,
                        recomputed_uploads * per
                    )));
                }
            }
            prev_uploads = r.cumulative_uploads;
            prev_bits = r.cumulative_bits;
        }
        let derived: Vec<u64> = (0..m)
            .map(|w| self.upload_iterations(w).len() as u64)
            .collect();
        if derived != self.per_worker_uploads {
            return Err(MetricsError::Invariant(
                "per-worker upload counts disagree with clock snapshots".into(),
            ));
        }
        Ok(())
    }
}

/// The Lyapunov value
/// `V(θ^k) = f(θ^k) − f(θ*) + Σ_{d=1}^D Σ_{j=d}^D (ξ_j/α)·‖θ^{k+1−d} − θ^{k−d}‖₂²`.
///
/// `params` holds the last `D+1` parameter vectors ordered oldest → newest,
/// i.e. `[θ^{k−D}, …, θ^k]`; histories before iteration D are zero-padded by
/// the caller.
pub fn lyapunov(params: &[Vec<f64>], loss_residual: f64, xi: &[f64], alpha: f64) -> f64 {
    let depth = xi.len();
    assert_eq!(
        params.len(),
        depth + 1,
        "need D+1 parameter snapshots for depth D"
    );
    // β_d = (Σ_{j=d}^D ξ_j)/α via a suffix sum.
    let mut beta = vec![0.0; depth];
    let mut acc = 0.0;
    for d in (0..depth).rev() {
        acc += xi[d];
        beta[d] = acc / alpha;
    }
    let mut value = loss_residual;
    for d in 1..=depth {
        let newer = &params[depth + 1 - d];
        let older = &params[depth - d];
        let diff_sq: f64 = newer
            .iter()
            .zip(older)
            .map(|(a, b)| (a - b) * (a - b))
            .sum();
        value += beta[d - 1] * diff_sq;
    }
    value
}

/// Transmitted-bit accounting: `32 + b·p` per upload in the quantized modes,
/// `32·p` per exact-gradient upload otherwise.
pub fn bits_accounting(algorithm: Algorithm, p: usize, bits: u32, uploads: u64) -> u64 {
    uploads * per_upload_bits(algorithm, p, bits)
}

pub fn per_upload_bits(algorithm: Algorithm, p: usize, bits: u32) -> u64 {
    if algorithm.is_quantized() {
        crate::codec::payload_bits(p, bits)
    } else {
        32 * p as u64
    }
}

/// Result of the log-linear convergence-rate fit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateFit {
    /// Per-iteration contraction factor `σ = exp(slope)`.
    pub sigma: f64,
    /// Coefficient of determination of the fit; a flat sequence fits a flat
    /// line perfectly and reports 1.
    pub r_squared: f64,
}

/// Least-squares fit of `ln r_k` against `k`. The caller applies any
/// burn-in; every residual in the window must be positive and there must be
/// at least ten of them.
pub fn fit_linear_rate(residuals: &[f64]) -> Result<RateFit, MetricsError> {
    if residuals.len() < 10 {
        return Err(MetricsError::TooFewResiduals {
            need: 10,
            got: residuals.len(),
        });
    }
    let mut logs = Vec::with_capacity(residuals.len());
    for (index, &value) in residuals.iter().enumerate() {
        if value.is_nan() || value <= 0.0 {
            return Err(MetricsError::NonPositiveResidual { index, value });
        }
        logs.push(value.ln());
    }
    let n = logs.len() as f64;
    let mean_x = (logs.len() - 1) as f64 / 2.0;
    let mean_y = logs.iter().sum::<f64>() / n;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    let mut syy = 0.0;
    for (i, &y) in logs.iter().enumerate() {
        let dx = i as f64 - mean_x;
        let dy = y - mean_y;
        sxx += dx * dx;
        sxy += dx * dy;
        syy += dy * dy;
    }
    let slope = sxy / sxx;
    // A numerically flat sequence (deviations at rounding level) is an exact
    // fit of the zero-slope line.
    let flat_tol = n * (f64::EPSILON * (1.0 + mean_y.abs())).powi(2);
    let r_squared = if syy <= flat_tol {
        1.0
    } else {
        (sxy * sxy) / (sxx * syy)
    };
    Ok(RateFit {
        sigma: slope.exp(),
        r_squared,
    })
}

/// One row of the per-worker upload-bound report.
#[derive(Debug, Clone, PartialEq)]
pub struct Prop1Row {
    pub worker: usize,
    /// Largest history depth whose threshold the worker's smoothness clears.
    pub d_m: usize,
    /// `ceil(k/(d_m+1)) + 1`; the `+1` covers the forced initial upload.
    pub bound: u64,
    pub actual: u64,
    pub pass: bool,
}

/// Checks every worker's upload count against the bound
/// `d_m = max{d : L_m² ≤ ξ_d/(3α²M²D)}`, uploads ≤ `ceil(k/(d_m+1)) + 1`.
/// Requires non-increasing ξ.
pub fn prop1_check(
    per_worker_uploads: &[u64],
    iterations: usize,
    worker_smoothness: &[f64],
    alpha: f64,
    xi: &[f64],
) -> Result<Vec<Prop1Row>, MetricsError> {
    for (index, pair) in xi.windows(2).enumerate() {
        if pair[1] > pair[0] {
            return Err(MetricsError::NonMonotoneXi {
                index: index + 1,
                value: pair[1],
            });
        }
    }
    if per_worker_uploads.len() != worker_smoothness.len() {
        return Err(MetricsError::LengthMismatch {
            what: "per-worker uploads",
            expected: worker_smoothness.len(),
            got: per_worker_uploads.len(),
        });
    }
    let workers = worker_smoothness.len();
    let depth = xi.len();
    let scale = 3.0 * alpha * alpha * (workers * workers) as f64 * depth as f64;
    let rows = worker_smoothness
        .iter()
        .enumerate()
        .map(|(worker, &l)| {
            let mut d_m = 0;
            for d in (1..=depth).rev() {
                if l * l <= xi[d - 1] / scale {
                    d_m = d;
                    break;
                }
            }
            let bound = (iterations as u64).div_ceil(d_m as u64 + 1) + 1;
            let actual = per_worker_uploads[worker];
            Prop1Row {
                worker,
                d_m,
                bound,
                actual,
                pass: actual <= bound,
            }
        })
        .collect();
    Ok(rows)
}

fn format_opt(value: Option<f64>) -> String {
    value.map(|v| v.to_string()).unwrap_or_default()
}

/// Serializes the log: `# key=value` config comments, a fixed header row,
/// then one row per record. Quoting follows RFC 4180, though no field
/// produced here ever needs it (clock snapshots use `;`).
pub fn csv_string(log: &TelemetryLog) -> String {
    let mut out = String::new();
    for line in log.config.comment_lines() {
        out.push_str(&line);
        out.push('\n');
    }
    out.push_str(CSV_HEADER);
    out.push('\n');
    for r in &log.records {
        let clocks = r
            .clocks
            .iter()
            .map(|c| c.to_string())
            .collect::<Vec<_>>()
            .join(";");
        let fields = [
            r.iteration.to_string(),
            r.loss.to_string(),
            format_opt(r.loss_residual),
            r.grad_norm.to_string(),
            r.uploads_this_round.to_string(),
            r.cumulative_uploads.to_string(),
            r.cumulative_bits.to_string(),
            format_opt(r.lyapunov),
            clocks,
        ];
        let quoted: Vec<String> = fields.iter().map(|f| quote_rfc4180(f)).collect();
        out.push_str(&quoted.join(","));
        out.push('\n');
    }
    out
}

pub fn export_csv(log: &TelemetryLog, path: impl AsRef<Path>) -> Result<(), MetricsError> {
    let mut file = std::fs::File::create(path)?;
    file.write_all(csv_string(log).as_bytes())?;
    Ok(())
}

fn quote_rfc4180(field: &str) -> String {
    if field.contains(',') || field.contains('"') || field.contains('\n') || field.contains('\r') {
        format!("\"{}\"", field.replace('"', "\"\""))
    } else {
        field.to_string()
    }
}

/// Config `key=value` pairs recovered from the comment header.
pub type CsvConfig = Vec<(String, String)>;

/// Parses a CSV produced by [`csv_string`] back into config pairs and
/// records; the round-trip partner of the exporter.
pub fn parse_csv(text: &str) -> Result<(CsvConfig, Vec<TelemetryRecord>), MetricsError> {
    let mut config = Vec::new();
    let mut records = Vec::new();
    let mut saw_header = false;
    for (line_index, line) in text.lines().enumerate() {
        let line_no = line_index + 1;
        if line.is_empty() {
            continue;
        }
        if let Some(rest) = line.strip_prefix("# ") {
            let (key, value) = rest.split_once('=').ok_or_else(|| MetricsError::Parse {
                line: line_no,
                message: "comment line without key=value".into(),
            })?;
            config.push((key.to_string(), value.to_string()));
            continue;
        }
        if !saw_header {
            if line != CSV_HEADER {
                return Err(MetricsError::Parse {
                    line: line_no,
                    message: format!("unexpected header {line:?}"),
                });
            }
            saw_header = true;
            continue;
        }
        let fields = split_rfc4180(line).map_err(|message| MetricsError::Parse {
            line: line_no,
            message,
        })?;
        if fields.len() != 9 {
            return Err(MetricsError::Parse {
                line: line_no,
                message: format!("expected 9 columns, got {}", fields.len()),
            });
        }
        let parse_f64 = |s: &str, what: &str| -> Result<f64, MetricsError> {
            s.parse().map_err(|_| MetricsError::Parse {
                line: line_no,
                message: format!("bad {what}: {s:?}"),
            })
        };
        let parse_opt = |s: &str, what: &str| -> Result<Option<f64>, MetricsError> {
            if s.is_empty() {
                Ok(None)
            } else {
                parse_f64(s, what).map(Some)
            }
        };
        let clocks = if fields[8].is_empty() {
            Vec::new()
        } else {
            fields[8]
                .split(';')
                .map(|c| {
                    c.parse().map_err(|_| MetricsError::Parse {
                        line: line_no,
                        message: format!("bad clock {c:?}"),
                    })
                })
                .collect::<Result<Vec<usize>, _>>()?
        };
        records.push(TelemetryRecord {
            iteration: parse_f64(&fields[0], "iteration")? as usize,
            loss: parse_f64(&fields[1], "loss")?,
            loss_residual: parse_opt(&fields[2], "loss_residual")?,
            grad_norm: parse_f64(&fields[3], "grad_norm")?,
            uploads_this_round: parse_f64(&fields[4], "uploads_this_round")? as usize,
            cumulative_uploads: parse_f64(&fields[5], "cumulative_uploads")? as u64,
            cumulative_bits: parse_f64(&fields[6], "cumulative_bits")? as u64,
            lyapunov: parse_opt(&fields[7], "lyapunov")?,
            clocks,
        });
    }
    if !saw_header {
        return Err(MetricsError::Parse {
            line: 0,
            message: "missing header row".into(),
        });
    }
    Ok((config, records))
}

fn split_rfc4180(line: &str) -> Result<Vec<String>, String> {
    let mut fields = Vec::new();
    let mut current = String::new();
    let mut chars = line.chars().peekable();
    let mut in_quotes = false;
    while let Some(c) = chars.next() {
        if in_quotes {
            match c {
                '"' if chars.peek() == Some(&'"') => {
                    chars.next();
                    current.push('"');
                }
                '"' => in_quotes = false,
                other => current.push(other),
            }
        } else {
            match c {
                '"' if current.is_empty() => in_quotes = true,
                ',' => fields.push(std::mem::take(&mut current)),
                other => current.push(other),
            }
        }
    }
    if in_quotes {
        return Err("unterminated quoted field".into());
    }
    fields.push(current);
    Ok(fields)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_echo() -> RunEcho {
        RunEcho {
            algorithm: "laq".into(),
            alpha: 0.0125,
            bits: 8,
            history_depth: 2,
            xi: vec![0.1, 0.1],
            max_staleness: 5,
            workers: 2,
            minibatch: 0,
            seed: 1,
            dim: 3,
            max_iterations: 10,
            target_residual: Some(1e-10),
        }
    }

    fn sample_log() -> TelemetryLog {
        let records = vec![
            TelemetryRecord {
                iteration: 0,
                loss: 2.0,
                loss_residual: Some(1.0),
                grad_norm: 3.0,
                uploads_this_round: 2,
                cumulative_uploads: 2,
                cumulative_bits: 112,
                lyapunov: Some(1.0),
                clocks: vec![0, 0],
            },
            TelemetryRecord {
                iteration: 1,
                loss: 1.5,
                loss_residual: Some(0.5),
                grad_norm: 2.0,
                uploads_this_round: 1,
                cumulative_uploads: 3,
                cumulative_bits: 168,
                lyapunov: Some(0.6),
                clocks: vec![0, 1],
            },
            TelemetryRecord {
                iteration: 2,
                loss: 1.2,
                loss_residual: Some(0.2),
                grad_norm: 1.0,
                uploads_this_round: 0,
                cumulative_uploads: 3,
                cumulative_bits: 168,
                lyapunov: Some(0.25),
                clocks: vec![0, 1],
            },
        ];
        TelemetryLog {
            config: sample_echo(),
            records,
            per_worker_uploads: vec![2, 1],
        }
    }

    #[test]
    fn lyapunov_reduces_to_residual_when_xi_is_zero() {
        let params = vec![vec![1.0, 2.0], vec![0.5, 1.0], vec![0.0, 0.0]];
        let v = lyapunov(&params, 0.75, &[0.0, 0.0], 0.1);
        assert_eq!(v, 0.75);
    }

    #[test]
    fn lyapunov_is_zero_at_optimum_with_flat_history() {
        let params = vec![vec![1.0, 1.0]; 3];
        let v = lyapunov(&params, 0.0, &[0.2, 0.1], 0.05);
        assert_eq!(v, 0.0);
    }

    #[test]
    fn lyapunov_matches_independent_double_sum() {
        // D = 2, ξ = [0.1, 0.1], α = 0.1, diffs ‖·‖² = [1 (newest), 4].
        let params = vec![vec![0.0], vec![2.0], vec![3.0]];
        let xi = [0.1, 0.1];
        let alpha = 0.1;
        let residual = 2.0;
        // Independent evaluation of Σ_{d=1}^D Σ_{j=d}^D (ξ_j/α)·diff_d.
        let diffs = [1.0, 4.0]; // d = 1, 2
        let mut expected = residual;
        for d in 1..=2usize {
            for j in d..=2usize {
                expected += xi[j - 1] / alpha * diffs[d - 1];
            }
        }
        assert_eq!(expected, 2.0 + (0.2 / 0.1) * 1.0 + (0.1 / 0.1) * 4.0);
        let got = lyapunov(&params, residual, &xi, alpha);
        assert!((got - expected).abs() < 1e-12, "{got} vs {expected}");
    }

    #[test]
    fn bits_accounting_examples() {
        assert_eq!(bits_accounting(Algorithm::Laq, 7850, 3, 620), 620 * 23582);
        assert_eq!(bits_accounting(Algorithm::Laq, 7850, 3, 0), 0);
        assert_eq!(bits_accounting(Algorithm::Gd, 100, 3, 10), 32_000);
        assert_eq!(bits_accounting(Algorithm::Lag, 100, 8, 1), 3200);
        assert_eq!(bits_accounting(Algorithm::Qgd, 10, 4, 2), 2 * 72);
    }

    #[test]
    fn exact_geometric_sequence_fits_perfectly() {
        let sigma = 0.9f64;
        let residuals: Vec<f64> = (0..40).map(|k| 5.0 * sigma.powi(k)).collect();
        let fit = fit_linear_rate(&residuals).unwrap();
        assert!((fit.sigma - sigma).abs() < 1e-12);
        assert!((fit.r_squared - 1.0).abs() < 1e-12);
    }

    #[test]
    fn constant_residuals_report_sigma_one() {
        let fit = fit_linear_rate(&[3.0; 15]).unwrap();
        assert_eq!(fit.sigma, 1.0);
        assert_eq!(fit.r_squared, 1.0);
    }

    #[test]
    fn rate_fit_is_invariant_to_uniform_scaling() {
        let residuals: Vec<f64> = (0..30)
            .map(|k| 2.0 * 0.83f64.powi(k) * (1.0 + 0.01 * (k as f64).sin()))
            .collect();
        let scaled: Vec<f64> = residuals.iter().map(|r| r * 1e6).collect();
        let a = fit_linear_rate(&residuals).unwrap();
        let b = fit_linear_rate(&scaled).unwrap();
        assert!((a.sigma - b.sigma).abs() < 1e-12);
        assert!((a.r_squared - b.r_squared).abs() < 1e-9);
    }

    #[test]
    fn rate_fit_rejects_bad_windows() {
        assert!(matches!(
            fit_linear_rate(&[1.0; 5]),
            Err(MetricsError::TooFewResiduals { .. })
        ));
        let mut residuals = vec![1.0; 12];
        residuals[4] = 0.0;
        assert!(matches!(
            fit_linear_rate(&residuals),
            Err(MetricsError::NonPositiveResidual { index: 4, .. })
        ));
    }

    #[test]
    fn prop1_huge_smoothness_gives_vacuous_bound() {
        let rows = prop1_check(&[100], 100, &[1e9], 0.01, &[0.1, 0.1]).unwrap();
        assert_eq!(rows[0].d_m, 0);
        assert_eq!(rows[0].bound, 101);
        assert!(rows[0].pass);
    }

    #[test]
    fn prop1_boundary_hits_full_depth() {
        // L² exactly equal to ξ/(3α²M²D) ⇒ d_m = D.
        let alpha = 0.05;
        let workers = 1usize;
        let depth = 4usize;
        let xi = vec![0.2; 4];
        let l = (xi[0] / (3.0 * alpha * alpha * (workers * workers) as f64 * depth as f64)).sqrt();
        let rows = prop1_check(&[3], 100, &[l], alpha, &xi).unwrap();
        assert_eq!(rows[0].d_m, depth);
        assert_eq!(rows[0].bound, 21);
    }

    #[test]
    fn prop1_rejects_non_monotone_xi() {
        assert!(matches!(
            prop1_check(&[1], 10, &[1.0], 0.1, &[0.1, 0.2]),
            Err(MetricsError::NonMonotoneXi { index: 1, .. })
        ));
    }

    #[test]
    fn csv_round_trips() {
        let log = sample_log();
        let text = csv_string(&log);
        let (config, records) = parse_csv(&text).unwrap();
        assert_eq!(records, log.records);
        assert!(config.contains(&("algorithm".to_string(), "laq".to_string())));
        assert!(config.contains(&("xi".to_string(), "0.1;0.1".to_string())));
        // Fixed column count.
        let header = text.lines().find(|l| !l.starts_with('#')).unwrap();
        assert_eq!(header.split(',').count(), 9);
    }

    #[test]
    fn csv_bytes_are_deterministic() {
        let log = sample_log();
        assert_eq!(csv_string(&log), csv_string(&log));
    }

    #[test]
    fn upload_gaps_come_from_clock_snapshots() {
        let log = sample_log();
        assert_eq!(log.upload_iterations(0), vec![0, 1]);
        assert_eq!(log.upload_iterations(1), vec![0]);
        // Worker 1 uploaded at round 0 only; one trailing skipped round.
        assert_eq!(log.max_upload_gap(1), 1);
        assert_eq!(log.max_upload_gap(0), 0);
        log.validate().unwrap();
    }

    #[test]
    fn validation_catches_broken_counters() {
        let mut log = sample_log();
        log.records[2].cumulative_uploads = 0;
        assert!(log.validate().is_err());
    }
}
