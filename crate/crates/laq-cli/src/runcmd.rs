//! The `run` command: turn resolved settings into problems, execute every
//! requested algorithm, write one CSV per run, and print the summary table.

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{anyhow, bail, Context, Result};
use laq_core::data::{
    load_libsvm, load_mnist_idx, partition, synthetic_classification, synthetic_quadratic, Dataset,
    PartitionMode,
};
use laq_core::engine::{
    reference_minimum, validate_recipe, Algorithm, EngineError, Problem, RunConfig,
};
use laq_core::losses::DataShard;
use laq_core::metrics::export_csv;

use crate::experiment::{ResolvedRun, Settings};
use crate::CliFailure;

/// A problem plus everything the reporting layer needs.
pub struct BuiltProblem {
    pub problem: Problem,
    /// Held-out test split for accuracy reporting (MNIST only).
    pub test: Option<DataShard>,
    /// Smoothness estimate used by the recipe validator.
    pub smoothness: f64,
}

fn require<T: Clone>(value: &Option<T>, key: &str) -> Result<T> {
    value
        .clone()
        .ok_or_else(|| anyhow!(CliFailure::Config(format!("missing setting {key}"))))
}

fn partition_mode(settings: &Settings) -> Result<PartitionMode> {
    match settings.partition.as_deref().unwrap_or("uniform") {
        "uniform" => Ok(PartitionMode::Uniform),
        "heterogeneous" => Ok(PartitionMode::Heterogeneous),
        other => bail!(CliFailure::Config(format!(
            "unknown partition mode {other:?}"
        ))),
    }
}

/// Cache key for problems shared between algorithm sections: everything
/// that affects the problem, none of what only affects the run.
fn problem_fingerprint(settings: &Settings) -> String {
    format!(
        "{:?}|{:?}|{:?}|{:?}|{:?}|{:?}|{:?}|{:?}|{:?}|{:?}|{:?}|{:?}|{:?}|{:?}",
        settings.model,
        settings.dataset,
        settings.workers,
        settings.partition,
        settings.seed,
        settings.lambda,
        settings.dim,
        settings.mu,
        settings.smoothness,
        settings.samples,
        settings.features,
        settings.classes,
        settings.hidden,
        settings.target_residual.is_some(),
    )
}

fn load_dataset(settings: &Settings, cache_dir: &Path) -> Result<(Dataset, Option<Dataset>)> {
    let name = require(&settings.dataset, "dataset")?;
    match name.as_str() {
        "mnist" => {
            let train = load_mnist_idx(
                cache_dir.join("train-images-idx3-ubyte"),
                cache_dir.join("train-labels-idx1-ubyte"),
            )
            .map_err(|e| {
                anyhow!(CliFailure::Data(format!(
                    "{e}; fetch it first: laq dataset fetch mnist --cache-dir {}",
                    cache_dir.display()
                )))
            })?;
            let test = load_mnist_idx(
                cache_dir.join("t10k-images-idx3-ubyte"),
                cache_dir.join("t10k-labels-idx1-ubyte"),
            )
            .ok();
            Ok((train, test))
        }
        "synthetic" => {
            let dataset = synthetic_classification(
                require(&settings.samples, "samples")?,
                require(&settings.features, "features")?,
                require(&settings.classes, "classes")?,
                require(&settings.seed, "seed")?,
            );
            Ok((dataset, None))
        }
        path if path.contains('.') || path.contains('/') => {
            let dim = require(&settings.features, "features (the libsvm dimension)")?;
            let load =
                load_libsvm(path, dim).map_err(|e| anyhow!(CliFailure::Data(e.to_string())))?;
            for warning in &load.warnings {
                eprintln!("warning: {warning}");
            }
            Ok((load.dataset, None))
        }
        other => bail!(CliFailure::Config(format!(
            "unknown dataset {other:?} (mnist, synthetic, or a libsvm path)"
        ))),
    }
}

/// Reference `f(θ*)` for convex sample-based problems, cached as a small
/// text file keyed by dataset, λ and partition seed.
fn reference_fstar(
    dataset_name: &str,
    problem: &Problem,
    single_shard_smoothness: f64,
    lambda: f64,
    seed: u64,
    cache_dir: &Path,
) -> Result<f64> {
    let key = cache_dir.join(format!(
        "fstar-{dataset_name}-lambda{lambda}-seed{seed}.txt"
    ));
    if let Ok(text) = std::fs::read_to_string(&key) {
        if let Ok(v) = text.trim().parse::<f64>() {
            return Ok(v);
        }
    }
    eprintln!(
        "computing reference optimum for {dataset_name} (one long GD run, cached at {})",
        key.display()
    );
    let (fstar, _) = reference_minimum(problem, 1.0 / single_shard_smoothness, 200_000, 1e-7)
        .map_err(map_engine_error)?;
    std::fs::create_dir_all(cache_dir)?;
    std::fs::write(&key, format!("{fstar}\n"))?;
    Ok(fstar)
}

pub fn build_problem(settings: &Settings, cache_dir: &Path) -> Result<BuiltProblem> {
    let model = require(&settings.model, "model")?;
    let workers = require(&settings.workers, "workers")?;
    let seed = require(&settings.seed, "seed")?;
    match model.as_str() {
        "quadratic" => {
            let p = require(&settings.dim, "p")?;
            let l = require(&settings.smoothness, "L")?;
            let mu = require(&settings.mu, "mu")?;
            let per_worker = vec![l / workers as f64; workers];
            let q = synthetic_quadratic(p, workers, &per_worker, mu, seed)
                .map_err(|e| anyhow!(CliFailure::Config(e.to_string())))?;
            Ok(BuiltProblem {
                problem: Problem::from_quadratic(&q),
                test: None,
                smoothness: q.smoothness,
            })
        }
        "logistic" | "mlp" => {
            let lambda = require(&settings.lambda, "lambda")?;
            let (dataset, test) = load_dataset(settings, cache_dir)?;
            if workers > dataset.len() {
                bail!(CliFailure::Config(format!(
                    "{workers} workers but only {} samples",
                    dataset.len()
                )));
            }
            let plan = partition(dataset.len(), workers, partition_mode(settings)?, seed)
                .map_err(|e| anyhow!(CliFailure::Config(e.to_string())))?;
            let single = partition(dataset.len(), 1, PartitionMode::Uniform, seed)
                .expect("one shard always fits");
            let single_problem = Problem::logistic(&dataset, &single, lambda);
            let smoothness = single_problem.smoothness_sum().unwrap_or(1.0);

            let mut problem = if model == "logistic" {
                Problem::logistic(&dataset, &plan, lambda)
            } else {
                Problem::mlp(
                    &dataset,
                    &plan,
                    require(&settings.hidden, "hidden")?,
                    lambda,
                    seed,
                )
            };
            if settings.target_residual.is_some() {
                if model == "mlp" {
                    bail!(CliFailure::Config(
                        "target-residual needs a known optimum; the MLP model has none".into()
                    ));
                }
                let fstar = reference_fstar(
                    &dataset.name,
                    &single_problem,
                    smoothness,
                    lambda,
                    seed,
                    cache_dir,
                )?;
                problem = problem.with_fstar(fstar);
            }
            Ok(BuiltProblem {
                problem,
                test: test.map(|t| t.as_single_shard()),
                smoothness,
            })
        }
        other => bail!(CliFailure::Config(format!(
            "unknown model {other:?} (quadratic, logistic, mlp)"
        ))),
    }
}

fn map_engine_error(e: EngineError) -> anyhow::Error {
    match e {
        EngineError::Diverged { iteration, loss } => anyhow!(CliFailure::Divergence(format!(
            "diverged at iteration {iteration} with loss {loss}"
        ))),
        other => anyhow!(CliFailure::Config(other.to_string())),
    }
}

pub fn run_config(run_spec: &ResolvedRun, fstar_known: bool) -> Result<RunConfig> {
    let s = &run_spec.settings;
    let depth = require(&s.big_d, "bigD")?;
    let xi = match &s.xi {
        None => vec![0.8 / depth as f64; depth],
        Some(values) if values.len() == 1 => vec![values[0]; depth],
        Some(values) if values.len() == depth => values.clone(),
        Some(values) => bail!(CliFailure::Config(format!(
            "xi has {} entries but bigD = {depth}",
            values.len()
        ))),
    };
    Ok(RunConfig {
        algorithm: run_spec.algorithm,
        alpha: require(&s.alpha, "alpha")?,
        bits: require(&s.bits, "bits")?,
        xi,
        max_staleness: require(&s.max_staleness, "max-staleness")?,
        max_iterations: require(&s.iters, "iters")?,
        target_residual: s.target_residual,
        minibatch: require(&s.minibatch, "minibatch")?,
        seed: require(&s.seed, "seed")?,
        track_lyapunov: fstar_known,
        descent_check: None,
    })
}

struct SummaryRow {
    algorithm: &'static str,
    iterations: usize,
    uploads: u64,
    bits: u64,
    accuracy: Option<f64>,
    final_loss: f64,
    csv: PathBuf,
}

/// Executes every resolved run and reports.
pub fn cmd_run(runs: &[ResolvedRun], out_dir: &Path, cache_dir: &Path) -> Result<()> {
    std::fs::create_dir_all(out_dir)
        .with_context(|| format!("creating output directory {}", out_dir.display()))?;

    // Problems are built once per distinct setting set (reference optima are
    // expensive); runs then execute in parallel.
    let mut cache: HashMap<String, Arc<BuiltProblem>> = HashMap::new();
    let mut prepared: Vec<(&ResolvedRun, Arc<BuiltProblem>)> = Vec::new();
    for run_spec in runs {
        let key = problem_fingerprint(&run_spec.settings);
        let built = match cache.get(&key) {
            Some(b) => Arc::clone(b),
            None => {
                let built = Arc::new(build_problem(&run_spec.settings, cache_dir)?);
                cache.insert(key, Arc::clone(&built));
                built
            }
        };
        prepared.push((run_spec, built));
    }

    // Advisory recipe check per lazy run.
    for (run_spec, built) in &prepared {
        if run_spec.algorithm.is_lazy() {
            let cfg = run_config(run_spec, built.problem.fstar.is_some())?;
            let report = validate_recipe(cfg.alpha, &cfg.xi, built.smoothness);
            for check in &report.checks {
                if !check.ok {
                    eprintln!(
                        "recipe warning [{}]: {} outside the sufficient condition ({})",
                        run_spec.algorithm.name(),
                        check.name,
                        check.detail
                    );
                }
            }
        }
    }

    use rayon::prelude::*;
    let rows: Vec<SummaryRow> = prepared
        .par_iter()
        .map(|(run_spec, built)| -> Result<SummaryRow> {
            let cfg = run_config(run_spec, built.problem.fstar.is_some())?;
            let outcome = laq_core::engine::run(&cfg, &built.problem).map_err(map_engine_error)?;
            let csv = out_dir.join(format!(
                "{}-seed{}.csv",
                run_spec.algorithm.name(),
                cfg.seed
            ));
            export_csv(&outcome.telemetry, &csv)
                .map_err(|e| anyhow!(CliFailure::Data(e.to_string())))?;
            let accuracy = match &built.test {
                Some(test) => Some(
                    built.problem.workers[0]
                        .accuracy(&outcome.params, test)
                        .map_err(|e| anyhow!(CliFailure::Config(e.to_string())))?,
                ),
                None => None,
            };
            Ok(SummaryRow {
                algorithm: run_spec.algorithm.name(),
                iterations: outcome.telemetry.iterations(),
                uploads: outcome.telemetry.total_uploads(),
                bits: outcome.telemetry.total_bits(),
                accuracy,
                final_loss: outcome.telemetry.final_record().loss,
                csv,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    print_summary(&rows);
    Ok(())
}

fn format_bits(bits: u64) -> String {
    if bits >= 10_000_000 {
        format!("{:.2e}", bits as f64)
    } else {
        bits.to_string()
    }
}

fn print_summary(rows: &[SummaryRow]) {
    println!(
        "\n{:<10} {:>12} {:>16} {:>12} {:>10}  CSV",
        "Algorithm", "Iteration #", "Communication #", "Bit #", "Accuracy"
    );
    for row in rows {
        let accuracy = row
            .accuracy
            .map(|a| format!("{a:.4}"))
            .unwrap_or_else(|| "-".to_string());
        println!(
            "{:<10} {:>12} {:>16} {:>12} {:>10}  {}",
            row.algorithm,
            row.iterations,
            row.uploads,
            format_bits(row.bits),
            accuracy,
            row.csv.display()
        );
    }
    if rows.iter().all(|r| r.accuracy.is_none()) {
        let best = rows
            .iter()
            .map(|r| r.final_loss)
            .fold(f64::INFINITY, f64::min);
        println!("(no test split available; best final loss {best:.6e})");
    }
}

/// `Algorithm` is re-exported for main's flag parsing.
pub fn parse_algorithm(name: &str) -> Result<Algorithm> {
    name.parse::<Algorithm>()
        .map_err(|e| anyhow!(CliFailure::Config(e)))
}
