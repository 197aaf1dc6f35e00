//! The `verify` command: named property suites with fixed seeds and
//! machine-readable pass/fail lines.

use anyhow::{anyhow, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

use laq_core::codec::{
    decode_innovation, pack_codes, quantization_step, quantize_innovation, unpack_codes,
};
use laq_core::data::{partition, synthetic_classification, synthetic_quadratic, PartitionMode};
use laq_core::engine::{run, Algorithm, Problem, RunConfig, StopReason};
use laq_core::losses::{
    finite_diff_gradient, DataShard, LogisticObjective, MlpLayout, MlpObjective, QuadraticTerm,
    WorkerObjective,
};
use laq_core::metrics::{fit_linear_rate, prop1_check};

use crate::CliFailure;

pub struct Check {
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

fn print_and_collect(target: &str, checks: Vec<Check>) -> Result<()> {
    let mut all_ok = true;
    for check in &checks {
        let status = if check.pass { "PASS" } else { "FAIL" };
        println!(
            "verify {target} {}: {status} ({})",
            check.name, check.detail
        );
        all_ok &= check.pass;
    }
    if all_ok {
        Ok(())
    } else {
        Err(anyhow!(CliFailure::VerifyFailed))
    }
}

pub fn cmd_verify(target: &str, seed: u64) -> Result<()> {
    match target {
        "codec" => print_and_collect(target, verify_codec(seed)),
        "gradients" => print_and_collect(target, verify_gradients(seed)),
        "reductions" => print_and_collect(target, verify_reductions(seed)),
        "prop1" => print_and_collect(target, verify_prop1(seed)),
        "rate" => print_and_collect(target, verify_rate(seed)),
        other => Err(anyhow!(CliFailure::Config(format!(
            "unknown verify target {other:?} (codec, gradients, reductions, prop1, rate)"
        )))),
    }
}

/// 10⁴ random quantizer trials against the ∞-norm error bound, plus a
/// pack/unpack round-trip sweep.
fn verify_codec(seed: u64) -> Vec<Check> {
    let mut rng = ChaCha20Rng::seed_from_u64(seed ^ 0xC0DEC);
    let slack = 1.0 + 2.0f64.powi(-40);
    let mut worst_ratio = 0.0f64;
    let mut bound_ok = true;
    for _ in 0..10_000 {
        let p = rng.gen_range(1..=256);
        let bits = rng.gen_range(1..=16);
        let center: Vec<f64> = (0..p).map(|_| rng.gen_range(-100.0..100.0)).collect();
        let gradient: Vec<f64> = center
            .iter()
            .map(|c| c + rng.gen_range(-10.0..10.0))
            .collect();
        let qi = quantize_innovation(&gradient, &center, bits).unwrap();
        let delta = decode_innovation(&qi);
        let bound = quantization_step(bits) * qi.radius;
        for i in 0..p {
            let err = (gradient[i] - (center[i] + delta[i])).abs();
            if bound > 0.0 {
                worst_ratio = worst_ratio.max(err / bound);
            }
            bound_ok &= err <= bound * slack;
        }
    }

    let mut pack_ok = true;
    let mut packed_checked = 0usize;
    for bits in [1u32, 2, 3, 4, 8, 13] {
        let top = ((1u64 << bits) - 1) as u32;
        for p in 1..=16usize {
            for _ in 0..200 {
                let codes: Vec<u32> = (0..p).map(|_| rng.gen_range(0..=top)).collect();
                let packed = pack_codes(&codes, bits).unwrap();
                pack_ok &= unpack_codes(&packed, bits, p).unwrap() == codes;
                packed_checked += 1;
            }
        }
    }

    vec![
        Check {
            name: "quantizer-error-bound".into(),
            pass: bound_ok,
            detail: format!("10000 trials, worst err/bound = {worst_ratio:.6}"),
        },
        Check {
            name: "pack-round-trip".into(),
            pass: pack_ok,
            detail: format!("{packed_checked} random vectors"),
        },
    ]
}

fn random_shard(rng: &mut ChaCha20Rng, n: usize, features: usize, classes: usize) -> DataShard {
    let x = ndarray::Array2::from_shape_fn((n, features), |_| rng.gen_range(-1.5..1.5));
    let mut y = ndarray::Array2::zeros((n, classes));
    for row in 0..n {
        let class = rng.gen_range(0..classes);
        y[(row, class)] = 1.0;
    }
    DataShard::new(x, y, n).unwrap()
}

/// Analytic vs central-difference gradients, 100 points per model family.
fn verify_gradients(seed: u64) -> Vec<Check> {
    let mut rng = ChaCha20Rng::seed_from_u64(seed ^ 0x6AD);
    let mut worst = 0.0f64;
    let mut ok = true;
    for _ in 0..100 {
        let quadratic = {
            let dim = 8;
            let m = ndarray::Array2::from_shape_fn((dim, dim), |_| rng.gen_range(-1.0..1.0));
            let mut a = m.t().dot(&m) / dim as f64;
            for i in 0..dim {
                a[(i, i)] += 0.5;
            }
            let b = ndarray::Array1::from_shape_fn(dim, |_| rng.gen_range(-1.0..1.0));
            WorkerObjective::Quadratic(QuadraticTerm::new(a, b))
        };
        let logistic = WorkerObjective::Logistic(LogisticObjective::new(
            random_shard(&mut rng, 12, 6, 3),
            0.01,
        ));
        let mlp = WorkerObjective::Mlp(MlpObjective::new(
            random_shard(&mut rng, 8, 5, 3),
            MlpLayout::new(5, 7, 3),
            0.01,
        ));
        for obj in [quadratic, logistic, mlp] {
            let theta: Vec<f64> = (0..obj.dim()).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let analytic = obj.gradient(&theta).unwrap();
            let numeric = finite_diff_gradient(&obj, &theta, 1e-6).unwrap();
            let diff: f64 = analytic
                .iter()
                .zip(&numeric)
                .map(|(a, n)| (a - n) * (a - n))
                .sum::<f64>()
                .sqrt();
            let scale: f64 = numeric.iter().map(|g| g * g).sum::<f64>().sqrt().max(1e-12);
            worst = worst.max(diff / scale);
            ok &= diff / scale <= 1e-5;
        }
    }
    vec![Check {
        name: "finite-difference-agreement".into(),
        pass: ok,
        detail: format!("300 gradients, worst relative error {worst:.2e}"),
    }]
}

/// LAQ with ξ ≡ 0, t̄ = 0, b = 24 tracks plain GD coordinatewise.
fn verify_reductions(seed: u64) -> Vec<Check> {
    let dataset = synthetic_classification(500, 10, 2, seed.wrapping_add(2024));
    let plan = partition(
        dataset.len(),
        5,
        PartitionMode::Uniform,
        seed.wrapping_add(2024),
    )
    .unwrap();
    let problem = Problem::logistic(&dataset, &plan, 0.01);
    let alpha = 1.0 / (2.0 * problem.smoothness_sum().unwrap());

    let mut laq = RunConfig::new(Algorithm::Laq, alpha);
    laq.bits = 24;
    laq.xi = Vec::new();
    laq.max_staleness = 0;
    laq.max_iterations = 200;
    let laq_out = run(&laq, &problem).unwrap();

    let mut gd = RunConfig::new(Algorithm::Gd, alpha);
    gd.max_iterations = 200;
    let gd_out = run(&gd, &problem).unwrap();

    let floor = 1e-8 * gd_out.params.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
    let worst = laq_out
        .params
        .iter()
        .zip(&gd_out.params)
        .map(|(a, b)| (a - b).abs() / b.abs().max(floor))
        .fold(0.0f64, f64::max);
    vec![Check {
        name: "laq-reduces-to-gd".into(),
        pass: worst <= 1e-3,
        detail: format!("200 iterations, worst per-coordinate deviation {worst:.2e}"),
    }]
}

/// The per-worker upload bound on the heterogeneous quadratic.
fn verify_prop1(seed: u64) -> Vec<Check> {
    let smoothness = vec![0.1, 0.1, 1.0, 10.0];
    let q = synthetic_quadratic(16, 4, &smoothness, 0.2, seed.wrapping_add(707)).unwrap();
    let problem = Problem::from_quadratic(&q);
    let depth = 10;
    let mut cfg = RunConfig::new(Algorithm::Laq, 1.0 / (8.0 * q.smoothness));
    cfg.bits = 8;
    cfg.xi = vec![1.0 / (16.0 * depth as f64); depth];
    cfg.max_staleness = 100;
    cfg.max_iterations = 2000;
    let outcome = run(&cfg, &problem).unwrap();
    let rows = prop1_check(
        &outcome.telemetry.per_worker_uploads,
        outcome.telemetry.iterations(),
        &smoothness,
        cfg.alpha,
        &cfg.xi,
    )
    .unwrap();
    let mut checks: Vec<Check> = rows
        .iter()
        .map(|row| Check {
            name: format!("worker-{}-bound", row.worker),
            pass: row.pass,
            detail: format!(
                "L = {}, d_m = {}, uploads {} ≤ {}",
                smoothness[row.worker], row.d_m, row.actual, row.bound
            ),
        })
        .collect();
    let uploads = &outcome.telemetry.per_worker_uploads;
    checks.push(Check {
        name: "smooth-workers-upload-less".into(),
        pass: uploads[0] < uploads[3] && uploads[1] < uploads[3],
        detail: format!("uploads {uploads:?}"),
    });
    checks
}

/// Linear convergence of LAQ under the conservative recipe.
fn verify_rate(seed: u64) -> Vec<Check> {
    let q = synthetic_quadratic(20, 5, &[2.0; 5], 1.0, seed.wrapping_add(505)).unwrap();
    let problem = Problem::from_quadratic(&q);
    let depth = 5;
    let mut cfg = RunConfig::new(Algorithm::Laq, 1.0 / (8.0 * q.smoothness));
    cfg.bits = 8;
    cfg.xi = vec![1.0 / (16.0 * depth as f64); depth];
    cfg.max_staleness = 20;
    cfg.max_iterations = 200_000;
    cfg.target_residual = Some(1e-10);
    let outcome = run(&cfg, &problem).unwrap();

    let reached = outcome.stop == StopReason::TargetReached;
    let residuals: Vec<f64> = outcome
        .telemetry
        .records
        .iter()
        .filter_map(|r| r.loss_residual)
        .collect();
    let burn_in = depth.max(20);
    let window: Vec<f64> = residuals[burn_in.min(residuals.len())..]
        .iter()
        .copied()
        .take_while(|r| *r > 0.0)
        .collect();
    match fit_linear_rate(&window) {
        Ok(fit) => vec![
            Check {
                name: "residual-target".into(),
                pass: reached,
                detail: format!("{} iterations to 1e-10", outcome.telemetry.iterations()),
            },
            Check {
                name: "linear-fit".into(),
                pass: fit.sigma < 1.0 && fit.r_squared >= 0.98,
                detail: format!("σ = {:.6}, R² = {:.6}", fit.sigma, fit.r_squared),
            },
        ],
        Err(e) => vec![Check {
            name: "linear-fit".into(),
            pass: false,
            detail: e.to_string(),
        }],
    }
}
