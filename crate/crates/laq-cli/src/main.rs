//! `laq` — runs and analyzes communication-efficient distributed
//! gradient-descent experiments.
//!
//! Exit codes: 0 success, 1 verification failure, 2 configuration error,
//! 3 divergence, 4 data error.

mod datasets;
mod experiment;
mod runcmd;
mod verify;

use std::path::PathBuf;

use anyhow::{anyhow, Result};
use clap::{Args, Parser, Subcommand};

use experiment::{parse_experiment, parse_xi, preset, resolve, ExperimentFile, Settings};

/// Failure classes mapped to process exit codes.
#[derive(Debug)]
pub enum CliFailure {
    VerifyFailed,
    Config(String),
    Divergence(String),
    Data(String),
}

impl CliFailure {
    fn code(&self) -> i32 {
        match self {
            CliFailure::VerifyFailed => 1,
            CliFailure::Config(_) => 2,
            CliFailure::Divergence(_) => 3,
            CliFailure::Data(_) => 4,
        }
    }
}

impl std::fmt::Display for CliFailure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliFailure::VerifyFailed => write!(f, "verification failed"),
            CliFailure::Config(msg) => write!(f, "configuration error: {msg}"),
            CliFailure::Divergence(msg) => write!(f, "{msg}"),
            CliFailure::Data(msg) => write!(f, "data error: {msg}"),
        }
    }
}

impl std::error::Error for CliFailure {}

#[derive(Parser)]
#[command(
    name = "laq",
    about = "Communication-efficient distributed gradient descent: \
             lazily aggregated quantized gradients and baselines",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one or more training experiments and export telemetry CSVs.
    Run(Box<RunArgs>),
    /// Run a named verification suite (codec, gradients, reductions, prop1, rate).
    Verify {
        target: String,
        /// Base seed for the suite's random trials.
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Fetch or check a dataset in the cache directory.
    Dataset {
        /// `fetch` downloads and validates checksums; `check` validates
        /// presence and structural integrity only.
        action: String,
        name: String,
        #[arg(long, env = "LAQ_CACHE_DIR", default_value = "dataset-cache")]
        cache_dir: PathBuf,
    },
}

#[derive(Args)]
struct RunArgs {
    /// Experiment file (key = value lines with `[algorithm]` sections).
    #[arg(long)]
    experiment: Option<PathBuf>,
    /// Built-in preset: paper-gd-suite, paper-sgd-suite, quadratic-recipe.
    #[arg(long, conflicts_with = "experiment")]
    preset: Option<String>,
    /// Algorithm to run (gd, qgd, lag, laq, sgd, slaq). With an experiment
    /// file or preset this filters its sections.
    #[arg(long)]
    algorithm: Option<String>,
    /// Model family: quadratic, logistic, mlp.
    #[arg(long)]
    model: Option<String>,
    /// Dataset: mnist, synthetic, or a path to a LIBSVM text file.
    #[arg(long)]
    dataset: Option<String>,
    /// Number of workers M.
    #[arg(long)]
    workers: Option<usize>,
    /// Partition mode: uniform or heterogeneous.
    #[arg(long)]
    partition: Option<String>,
    /// Bits per coordinate b.
    #[arg(long)]
    bits: Option<u32>,
    /// Stepsize α.
    #[arg(long)]
    alpha: Option<f64>,
    /// History depth D of the skip rule.
    #[arg(long = "bigD")]
    big_d: Option<usize>,
    /// ξ weights: a scalar (replicated D times) or a comma list of length D.
    #[arg(long)]
    xi: Option<String>,
    /// Staleness bound t̄.
    #[arg(long)]
    max_staleness: Option<usize>,
    /// Iteration budget K.
    #[arg(long)]
    iters: Option<usize>,
    /// Stop when the loss residual reaches this value.
    #[arg(long)]
    target_residual: Option<f64>,
    /// Mini-batch size for sgd/slaq.
    #[arg(long)]
    minibatch: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Regularizer λ for logistic/mlp.
    #[arg(long)]
    lambda: Option<f64>,
    /// Quadratic model dimension.
    #[arg(long)]
    p: Option<usize>,
    /// Quadratic strong convexity μ.
    #[arg(long)]
    mu: Option<f64>,
    /// Quadratic global smoothness L.
    #[arg(long = "L")]
    smoothness: Option<f64>,
    /// Synthetic dataset size.
    #[arg(long)]
    samples: Option<usize>,
    /// Feature dimension (synthetic data and LIBSVM densification).
    #[arg(long)]
    features: Option<usize>,
    /// Class count for synthetic data.
    #[arg(long)]
    classes: Option<usize>,
    /// Hidden-layer width of the MLP.
    #[arg(long)]
    hidden: Option<usize>,
    /// Output directory for CSVs.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Dataset/reference cache directory.
    #[arg(long, env = "LAQ_CACHE_DIR", default_value = "dataset-cache")]
    cache_dir: PathBuf,
}

impl RunArgs {
    fn as_settings(&self) -> Result<Settings> {
        Ok(Settings {
            model: self.model.clone(),
            dataset: self.dataset.clone(),
            workers: self.workers,
            partition: self.partition.clone(),
            alpha: self.alpha,
            bits: self.bits,
            big_d: self.big_d,
            xi: self.xi.as_deref().map(parse_xi).transpose()?,
            max_staleness: self.max_staleness,
            iters: self.iters,
            target_residual: self.target_residual,
            minibatch: self.minibatch,
            seed: self.seed,
            lambda: self.lambda,
            dim: self.p,
            mu: self.mu,
            smoothness: self.smoothness,
            samples: self.samples,
            features: self.features,
            classes: self.classes,
            hidden: self.hidden,
            out: self.out.clone(),
        })
    }
}

fn cmd_run(args: &RunArgs) -> Result<()> {
    let file: ExperimentFile = if let Some(path) = &args.experiment {
        let text = std::fs::read_to_string(path).map_err(|e| {
            anyhow!(CliFailure::Config(format!(
                "cannot read experiment file {}: {e}",
                path.display()
            )))
        })?;
        parse_experiment(&text)
            .map_err(|e| anyhow!(CliFailure::Config(format!("experiment file: {e}"))))?
    } else if let Some(name) = &args.preset {
        preset(name).map_err(|e| anyhow!(CliFailure::Config(e.to_string())))?
    } else {
        ExperimentFile {
            globals: Settings::default(),
            sections: Vec::new(),
        }
    };

    let flags = args
        .as_settings()
        .map_err(|e| anyhow!(CliFailure::Config(e.to_string())))?;
    let flag_algorithm = args
        .algorithm
        .as_deref()
        .map(runcmd::parse_algorithm)
        .transpose()?;
    let runs = resolve(&file, &flags, flag_algorithm)
        .map_err(|e| anyhow!(CliFailure::Config(e.to_string())))?;

    let out_dir = runs[0]
        .settings
        .out
        .clone()
        .unwrap_or_else(|| PathBuf::from("runs"));
    runcmd::cmd_run(&runs, &out_dir, &args.cache_dir)
}

fn dispatch() -> Result<()> {
    match Cli::parse().command {
        Command::Run(args) => cmd_run(&args),
        Command::Verify { target, seed } => verify::cmd_verify(&target, seed),
        Command::Dataset {
            action,
            name,
            cache_dir,
        } => datasets::cmd_dataset(&action, &name, &cache_dir),
    }
}

fn main() {
    match dispatch() {
        Ok(()) => {}
        Err(error) => {
            eprintln!("error: {error}");
            let code = error
                .downcast_ref::<CliFailure>()
                .map(CliFailure::code)
                .unwrap_or(2);
            std::process::exit(code);
        }
    }
}
