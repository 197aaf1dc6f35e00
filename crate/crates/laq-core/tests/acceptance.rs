//! Acceptance suite: one test per criterion, each printing a pass line with
//! its runtime. Criterion 10 (full MNIST) is opt-in:
//! `cargo test --release -p laq-core --test acceptance -- --ignored`.

use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

use laq_core::codec::{
    decode_innovation, pack_codes, quantization_step, quantize_innovation, unpack_codes,
};
use laq_core::data::{
    load_mnist_idx, partition, synthetic_classification, synthetic_quadratic, PartitionMode,
};
use laq_core::engine::{
    reference_minimum, run, Algorithm, Problem, RunConfig, RunOutcome, StopReason,
};
use laq_core::losses::{
    finite_diff_gradient, DataShard, LogisticObjective, MlpLayout, MlpObjective, QuadraticTerm,
    WorkerObjective,
};
use laq_core::metrics::{csv_string, fit_linear_rate, prop1_check};

fn report(criterion: &str, start: Instant, budget: Duration) {
    let elapsed = start.elapsed();
    println!(
        "acceptance {criterion}: PASS ({:.2?} of {:.0?} budget)",
        elapsed, budget
    );
    assert!(
        elapsed <= budget,
        "{criterion} exceeded its runtime budget: {elapsed:.2?} > {budget:.2?}"
    );
}

/// Criterion 1 — codec error bound over 10⁴ random trials.
#[test]
fn criterion_1_codec_error_bound() {
    let start = Instant::now();
    let mut rng = ChaCha20Rng::seed_from_u64(1001);
    let slack = 1.0 + 2.0f64.powi(-40);
    for trial in 0..10_000 {
        let p = rng.gen_range(1..=256);
        let bits = rng.gen_range(1..=16);
        let center: Vec<f64> = (0..p).map(|_| rng.gen_range(-100.0..100.0)).collect();
        let gradient: Vec<f64> = center
            .iter()
            .map(|c| c + rng.gen_range(-10.0..10.0))
            .collect();
        let qi = quantize_innovation(&gradient, &center, bits).unwrap();
        let delta = decode_innovation(&qi);
        let bound = quantization_step(bits) * qi.radius * slack;
        for i in 0..p {
            let err = (gradient[i] - (center[i] + delta[i])).abs();
            assert!(
                err <= bound,
                "trial {trial}: |err| = {err} > {bound} (p={p}, b={bits})"
            );
        }
    }
    report(
        "criterion-1 codec-error-bound",
        start,
        Duration::from_secs(5),
    );
}

/// Criterion 2 — bit-packing round trip: complete enumeration wherever the
/// code space has at most 2^16 vectors, boundary patterns plus seeded random
/// vectors elsewhere. Zero failures allowed.
#[test]
fn criterion_2_bit_packing_round_trip() {
    let start = Instant::now();
    let mut checked = 0u64;

    let mut verify = |codes: &[u32], bits: u32| {
        let packed = pack_codes(codes, bits).unwrap();
        assert_eq!(packed.len(), (codes.len() * bits as usize).div_ceil(8));
        let unpacked = unpack_codes(&packed, bits, codes.len()).unwrap();
        assert_eq!(unpacked, codes, "bits={bits}");
        checked += 1;
    };

    let mut rng = ChaCha20Rng::seed_from_u64(1002);
    for bits in [1u32, 2, 3, 4, 8] {
        let alphabet = 1u64 << bits;
        for p in 1..=16usize {
            let space = (alphabet as f64).powi(p as i32);
            if space <= 65_536.0 {
                // Odometer over the complete code space.
                let mut codes = vec![0u32; p];
                loop {
                    verify(&codes, bits);
                    let mut pos = 0;
                    loop {
                        if pos == p {
                            break;
                        }
                        codes[pos] += 1;
                        if codes[pos] as u64 == alphabet {
                            codes[pos] = 0;
                            pos += 1;
                        } else {
                            break;
                        }
                    }
                    if pos == p {
                        break;
                    }
                }
            } else {
                let top = (alphabet - 1) as u32;
                verify(&vec![0; p], bits);
                verify(&vec![top; p], bits);
                for position in 0..p {
                    for value in 0..alphabet as u32 {
                        let mut codes = vec![0u32; p];
                        codes[position] = value;
                        verify(&codes, bits);
                    }
                }
                for _ in 0..2000 {
                    let codes: Vec<u32> =
                        (0..p).map(|_| rng.gen_range(0..alphabet) as u32).collect();
                    verify(&codes, bits);
                }
            }
        }
    }
    println!("  bit-packing vectors checked: {checked}");
    report("criterion-2 bit-packing", start, Duration::from_secs(10));
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

/// Criterion 3 — analytic gradients vs central differences, 100 random
/// points per model variant, relative ℓ₂ error ≤ 1e−5.
#[test]
fn criterion_3_gradient_oracle() {
    let start = Instant::now();
    let mut rng = ChaCha20Rng::seed_from_u64(1003);
    for point in 0..100 {
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
            assert!(
                diff / scale <= 1e-5,
                "point {point}: relative error {} > 1e-5",
                diff / scale
            );
        }
    }
    report(
        "criterion-3 gradient-oracle",
        start,
        Duration::from_secs(30),
    );
}

/// The synthetic logistic task shared by criteria 4 and 8: p = 20 (2 classes
/// × 10 features), N = 500 samples over M = 5 workers.
fn reduction_problem() -> (Problem, f64) {
    let dataset = synthetic_classification(500, 10, 2, 2024);
    let plan = partition(dataset.len(), 5, PartitionMode::Uniform, 2024).unwrap();
    let problem = Problem::logistic(&dataset, &plan, 0.01);
    let l_hat = problem.smoothness_sum().unwrap();
    (problem, 1.0 / (2.0 * l_hat))
}

fn laq_as_gd_config(alpha: f64) -> RunConfig {
    let mut cfg = RunConfig::new(Algorithm::Laq, alpha);
    cfg.bits = 24;
    cfg.xi = Vec::new(); // ξ ≡ 0
    cfg.max_staleness = 0; // t̄ = 0
    cfg.max_iterations = 200;
    cfg
}

/// Criterion 4 — with ξ ≡ 0, t̄ = 0 and b = 24, LAQ tracks GD to 1e−3
/// per-coordinate relative deviation over 200 iterations.
#[test]
fn criterion_4_gd_reduction() {
    let start = Instant::now();
    let (problem, alpha) = reduction_problem();

    let laq = run(&laq_as_gd_config(alpha), &problem).unwrap();
    let mut gd_cfg = RunConfig::new(Algorithm::Gd, alpha);
    gd_cfg.max_iterations = 200;
    let gd = run(&gd_cfg, &problem).unwrap();

    let floor = 1e-8 * gd.params.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
    for (i, (a, b)) in laq.params.iter().zip(&gd.params).enumerate() {
        let deviation = (a - b).abs() / b.abs().max(floor);
        assert!(
            deviation <= 1e-3,
            "coordinate {i}: relative deviation {deviation} > 1e-3"
        );
    }
    report("criterion-4 gd-reduction", start, Duration::from_secs(10));
}

/// The strongly convex quadratic of criteria 5, 6, 8 and 9:
/// μ = 1, L = 10 (five workers at L_m = 2), p = 20.
fn rate_problem() -> laq_core::data::QuadraticProblem {
    synthetic_quadratic(20, 5, &[2.0; 5], 1.0, 505).unwrap()
}

fn recipe_config(l: f64, target: f64) -> RunConfig {
    let depth = 5;
    let mut cfg = RunConfig::new(Algorithm::Laq, 1.0 / (8.0 * l));
    cfg.bits = 8;
    cfg.xi = vec![1.0 / (16.0 * depth as f64); depth];
    cfg.max_staleness = 20;
    cfg.max_iterations = 200_000;
    cfg.target_residual = Some(target);
    cfg
}

fn run_rate_problem(target: f64, algorithm: Algorithm) -> RunOutcome {
    let q = rate_problem();
    let problem = Problem::from_quadratic(&q);
    let mut cfg = recipe_config(q.smoothness, target);
    cfg.algorithm = algorithm;
    run(&cfg, &problem).unwrap()
}

/// Criterion 5 — LAQ under the recipe reaches residual 1e−10 and the fitted
/// rate is linear: σ < 1 with R² ≥ 0.98 after burn-in.
#[test]
fn criterion_5_linear_rate() {
    let start = Instant::now();
    let outcome = run_rate_problem(1e-10, Algorithm::Laq);
    assert_eq!(outcome.stop, StopReason::TargetReached);
    let last = outcome.telemetry.final_record().loss_residual.unwrap();
    assert!(last <= 1e-10, "final residual {last}");

    let residuals: Vec<f64> = outcome
        .telemetry
        .records
        .iter()
        .map(|r| r.loss_residual.unwrap())
        .collect();
    let burn_in = 20; // max(D, 20) with D = 5
    let window: Vec<f64> = residuals[burn_in..]
        .iter()
        .copied()
        .take_while(|r| *r > 0.0)
        .collect();
    let fit = fit_linear_rate(&window).unwrap();
    assert!(fit.sigma < 1.0, "σ = {}", fit.sigma);
    assert!(fit.r_squared >= 0.98, "R² = {}", fit.r_squared);
    println!(
        "  linear rate: σ = {:.6}, R² = {:.6}, {} iterations",
        fit.sigma,
        fit.r_squared,
        outcome.telemetry.iterations()
    );
    report("criterion-5 linear-rate", start, Duration::from_secs(10));
}

/// Criterion 6 — on the same task run to residual 1e−6: LAQ uses at most
/// half of QGD's uploads and at most a fifth of GD's bits.
#[test]
fn criterion_6_communication_savings() {
    let start = Instant::now();
    let laq = run_rate_problem(1e-6, Algorithm::Laq);
    let qgd = run_rate_problem(1e-6, Algorithm::Qgd);
    let gd = run_rate_problem(1e-6, Algorithm::Gd);
    for out in [&laq, &qgd, &gd] {
        assert_eq!(out.stop, StopReason::TargetReached);
    }
    let (laq_up, qgd_up) = (laq.telemetry.total_uploads(), qgd.telemetry.total_uploads());
    let (laq_bits, gd_bits) = (laq.telemetry.total_bits(), gd.telemetry.total_bits());
    println!("  uploads: laq {laq_up} vs qgd {qgd_up}; bits: laq {laq_bits} vs gd {gd_bits}");
    assert!(
        (laq_up as f64) <= 0.5 * qgd_up as f64,
        "uploads: {laq_up} > 0.5×{qgd_up}"
    );
    assert!(
        (laq_bits as f64) <= 0.2 * gd_bits as f64,
        "bits: {laq_bits} > 0.2×{gd_bits}"
    );
    report(
        "criterion-6 communication-savings",
        start,
        Duration::from_secs(10),
    );
}

/// The heterogeneous-smoothness quadratic of criterion 7:
/// M = 4 workers with L_m ∈ {0.1, 0.1, 1, 10}.
fn heterogeneous_setup() -> (Problem, RunConfig, Vec<f64>) {
    let smoothness = vec![0.1, 0.1, 1.0, 10.0];
    let q = synthetic_quadratic(16, 4, &smoothness, 0.2, 707).unwrap();
    let problem = Problem::from_quadratic(&q);
    let depth = 10;
    let mut cfg = RunConfig::new(Algorithm::Laq, 1.0 / (8.0 * q.smoothness));
    cfg.bits = 8;
    cfg.xi = vec![1.0 / (16.0 * depth as f64); depth];
    cfg.max_staleness = 100;
    cfg.max_iterations = 2000;
    (problem, cfg, smoothness)
}

/// Criterion 7 — the per-worker upload bound holds over 2000 iterations and
/// smoother workers communicate strictly less.
#[test]
fn criterion_7_upload_bound() {
    let start = Instant::now();
    let (problem, cfg, smoothness) = heterogeneous_setup();
    let outcome = run(&cfg, &problem).unwrap();
    let uploads = &outcome.telemetry.per_worker_uploads;
    let rows = prop1_check(
        uploads,
        outcome.telemetry.iterations(),
        &smoothness,
        cfg.alpha,
        &cfg.xi,
    )
    .unwrap();
    for row in &rows {
        println!(
            "  worker {}: L = {}, d_m = {}, uploads {} ≤ bound {}",
            row.worker, smoothness[row.worker], row.d_m, row.actual, row.bound
        );
        assert!(row.pass, "worker {} exceeded its bound", row.worker);
    }
    // The smooth workers must actually benefit from their small L.
    assert!(rows[0].d_m >= 1 && rows[1].d_m >= 1);
    assert!(
        uploads[0] < uploads[3] && uploads[1] < uploads[3],
        "uploads {uploads:?}"
    );
    report("criterion-7 upload-bound", start, Duration::from_secs(20));
}

/// Criterion 8 — in every lazy run of criteria 4–7, no inter-upload gap
/// exceeds t̄ + 1 skipped rounds.
#[test]
fn criterion_8_staleness_bound() {
    let start = Instant::now();
    // Criterion 4's LAQ-as-GD run (t̄ = 0).
    let (problem4, alpha4) = reduction_problem();
    let out4 = run(&laq_as_gd_config(alpha4), &problem4).unwrap();
    for w in 0..problem4.num_workers() {
        assert!(
            out4.telemetry.max_upload_gap(w) <= 1,
            "criterion-4 run, worker {w}"
        );
    }
    // Criteria 5/6's recipe runs (t̄ = 20).
    let out5 = run_rate_problem(1e-6, Algorithm::Laq);
    for w in 0..5 {
        assert!(
            out5.telemetry.max_upload_gap(w) <= 21,
            "criterion-5 run, worker {w}"
        );
    }
    // Criterion 7's heterogeneous run (t̄ = 100).
    let (problem7, cfg7, _) = heterogeneous_setup();
    let out7 = run(&cfg7, &problem7).unwrap();
    for w in 0..4 {
        assert!(
            out7.telemetry.max_upload_gap(w) <= 101,
            "criterion-7 run, worker {w}"
        );
    }
    report("criterion-8 staleness", start, Duration::from_secs(30));
}

/// Criterion 9 — identical configs and seeds give byte-identical CSVs.
#[test]
fn criterion_9_determinism() {
    let start = Instant::now();
    let a = run_rate_problem(1e-8, Algorithm::Laq);
    let b = run_rate_problem(1e-8, Algorithm::Laq);
    assert_eq!(csv_string(&a.telemetry), csv_string(&b.telemetry));

    let (problem7, cfg7, _) = heterogeneous_setup();
    let c = run(&cfg7, &problem7).unwrap();
    let d = run(&cfg7, &problem7).unwrap();
    assert_eq!(csv_string(&c.telemetry), csv_string(&d.telemetry));

    let (problem4, alpha4) = reduction_problem();
    let e = run(&laq_as_gd_config(alpha4), &problem4).unwrap();
    let f = run(&laq_as_gd_config(alpha4), &problem4).unwrap();
    assert_eq!(csv_string(&e.telemetry), csv_string(&f.telemetry));
    report("criterion-9 determinism", start, Duration::from_secs(30));
}

/// Criterion 10 (extended, opt-in) — MNIST logistic preset reaches the
/// reported test accuracy and LAQ's upload savings at residual 1e−6.
///
/// Needs the four uncompressed MNIST IDX files in `$LAQ_CACHE_DIR` (or
/// `./mnist-cache`); fetch them with `laq dataset fetch mnist`.
/// Run with: `cargo test --release -p laq-core --test acceptance -- --ignored`
#[test]
#[ignore = "tens of minutes; needs the MNIST files (laq dataset fetch mnist)"]
fn criterion_10_mnist_extended() {
    let cache = std::env::var("LAQ_CACHE_DIR").unwrap_or_else(|_| "mnist-cache".to_string());
    let dir = std::path::Path::new(&cache);
    let train = load_mnist_idx(
        dir.join("train-images-idx3-ubyte"),
        dir.join("train-labels-idx1-ubyte"),
    )
    .expect("MNIST training files missing; run `laq dataset fetch mnist` first");
    let test = load_mnist_idx(
        dir.join("t10k-images-idx3-ubyte"),
        dir.join("t10k-labels-idx1-ubyte"),
    )
    .expect("MNIST test files missing; run `laq dataset fetch mnist` first");

    let plan = partition(train.len(), 10, PartitionMode::Uniform, 1).unwrap();
    let base = Problem::logistic(&train, &plan, 0.01);

    // Reference optimum pinning f(θ*), cached nowhere: recomputed per run.
    let l_hat = {
        let single = Problem::logistic(
            &train,
            &partition(train.len(), 1, PartitionMode::Uniform, 1).unwrap(),
            0.01,
        );
        single.smoothness_sum().unwrap()
    };
    let (fstar, _) = reference_minimum(&base, 1.0 / l_hat, 100_000, 1e-9).unwrap();
    let problem = base.with_fstar(fstar);

    let mut laq = RunConfig::new(Algorithm::Laq, 0.02);
    laq.bits = 3;
    laq.xi = vec![0.08; 10];
    laq.max_staleness = 100;
    laq.max_iterations = 30_000;
    laq.target_residual = Some(1e-6);
    let laq_out = run(&laq, &problem).unwrap();

    let mut qgd = RunConfig::new(Algorithm::Qgd, 0.02);
    qgd.bits = 3;
    qgd.max_iterations = 30_000;
    qgd.target_residual = Some(1e-6);
    let qgd_out = run(&qgd, &problem).unwrap();

    let accuracy = problem.workers[0]
        .accuracy(&laq_out.params, &test.as_single_shard())
        .unwrap();
    println!(
        "mnist extended: accuracy {accuracy:.4}, laq uploads {}, qgd uploads {}, laq iters {}, laq bits {:.3e}",
        laq_out.telemetry.total_uploads(),
        qgd_out.telemetry.total_uploads(),
        laq_out.telemetry.iterations(),
        laq_out.telemetry.total_bits() as f64,
    );
    assert!(
        (accuracy - 0.9082).abs() <= 0.01,
        "test accuracy {accuracy} outside 0.9082 ± 0.01"
    );
    assert!(
        (laq_out.telemetry.total_uploads() as f64) < 0.1 * qgd_out.telemetry.total_uploads() as f64
    );
}
