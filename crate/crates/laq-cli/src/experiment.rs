//! Experiment descriptions: a flat key-value text format with one optional
//! `[algorithm]` section per run, plus the built-in presets. Resolution
//! order is command-line flag > experiment file > built-in default.

use std::path::PathBuf;
use std::str::FromStr;

use anyhow::{anyhow, bail, Context, Result};
use laq_core::engine::Algorithm;

/// One layer of optional settings; layers merge with "later wins".
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Settings {
    pub model: Option<String>,
    pub dataset: Option<String>,
    pub workers: Option<usize>,
    pub partition: Option<String>,
    pub alpha: Option<f64>,
    pub bits: Option<u32>,
    pub big_d: Option<usize>,
    pub xi: Option<Vec<f64>>,
    pub max_staleness: Option<usize>,
    pub iters: Option<usize>,
    pub target_residual: Option<f64>,
    pub minibatch: Option<usize>,
    pub seed: Option<u64>,
    pub lambda: Option<f64>,
    pub dim: Option<usize>,
    pub mu: Option<f64>,
    pub smoothness: Option<f64>,
    pub samples: Option<usize>,
    pub features: Option<usize>,
    pub classes: Option<usize>,
    pub hidden: Option<usize>,
    pub out: Option<PathBuf>,
}

impl Settings {
    /// Applies `overlay` on top of `self`: any key set in the overlay wins.
    pub fn merged(&self, overlay: &Settings) -> Settings {
        macro_rules! pick {
            ($field:ident) => {
                overlay.$field.clone().or_else(|| self.$field.clone())
            };
        }
        Settings {
            model: pick!(model),
            dataset: pick!(dataset),
            workers: pick!(workers),
            partition: pick!(partition),
            alpha: pick!(alpha),
            bits: pick!(bits),
            big_d: pick!(big_d),
            xi: pick!(xi),
            max_staleness: pick!(max_staleness),
            iters: pick!(iters),
            target_residual: pick!(target_residual),
            minibatch: pick!(minibatch),
            seed: pick!(seed),
            lambda: pick!(lambda),
            dim: pick!(dim),
            mu: pick!(mu),
            smoothness: pick!(smoothness),
            samples: pick!(samples),
            features: pick!(features),
            classes: pick!(classes),
            hidden: pick!(hidden),
            out: pick!(out),
        }
    }

    fn set(&mut self, key: &str, value: &str, line: usize) -> Result<()> {
        fn parse<T: FromStr>(value: &str, key: &str, line: usize) -> Result<T> {
            value
                .parse()
                .map_err(|_| anyhow!("line {line}: cannot parse {key} value {value:?}"))
        }
        match key {
            "model" => self.model = Some(value.to_string()),
            "dataset" => self.dataset = Some(value.to_string()),
            "workers" => self.workers = Some(parse(value, key, line)?),
            "partition" => self.partition = Some(value.to_string()),
            "alpha" => self.alpha = Some(parse(value, key, line)?),
            "bits" => self.bits = Some(parse(value, key, line)?),
            "bigD" => self.big_d = Some(parse(value, key, line)?),
            "xi" => self.xi = Some(parse_xi(value).context(format!("line {line}"))?),
            "max-staleness" => self.max_staleness = Some(parse(value, key, line)?),
            "iters" => self.iters = Some(parse(value, key, line)?),
            "target-residual" => self.target_residual = Some(parse(value, key, line)?),
            "minibatch" => self.minibatch = Some(parse(value, key, line)?),
            "seed" => self.seed = Some(parse(value, key, line)?),
            "lambda" => self.lambda = Some(parse(value, key, line)?),
            "p" => self.dim = Some(parse(value, key, line)?),
            "mu" => self.mu = Some(parse(value, key, line)?),
            "L" => self.smoothness = Some(parse(value, key, line)?),
            "samples" => self.samples = Some(parse(value, key, line)?),
            "features" => self.features = Some(parse(value, key, line)?),
            "classes" => self.classes = Some(parse(value, key, line)?),
            "hidden" => self.hidden = Some(parse(value, key, line)?),
            "out" => self.out = Some(PathBuf::from(value)),
            other => bail!("line {line}: unknown key {other:?}"),
        }
        Ok(())
    }
}

/// `xi` accepts a scalar (replicated over D later) or a comma list.
pub fn parse_xi(value: &str) -> Result<Vec<f64>> {
    value
        .split(',')
        .map(|tok| {
            tok.trim()
                .parse::<f64>()
                .map_err(|_| anyhow!("cannot parse xi entry {tok:?}"))
        })
        .collect()
}

/// A parsed experiment file: global settings plus one section per
/// algorithm, in file order.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentFile {
    pub globals: Settings,
    pub sections: Vec<(Algorithm, Settings)>,
}

/// Parses the experiment format: `key = value` lines, `#` comments, and
/// `[algorithm]` section headers. Unknown keys are rejected.
pub fn parse_experiment(text: &str) -> Result<ExperimentFile> {
    let mut globals = Settings::default();
    let mut sections: Vec<(Algorithm, Settings)> = Vec::new();

    for (index, raw) in text.lines().enumerate() {
        let line_no = index + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
            let algorithm =
                Algorithm::from_str(name.trim()).map_err(|e| anyhow!("line {line_no}: {e}"))?;
            if sections.iter().any(|(a, _)| *a == algorithm) {
                bail!("line {line_no}: duplicate section [{}]", algorithm.name());
            }
            sections.push((algorithm, Settings::default()));
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| anyhow!("line {line_no}: expected key = value, got {line:?}"))?;
        let target = match sections.last_mut() {
            Some((_, settings)) => settings,
            None => &mut globals,
        };
        target.set(key.trim(), value.trim(), line_no)?;
    }

    Ok(ExperimentFile { globals, sections })
}

/// Built-in experiment presets, expressed in the same file format so they
/// go through the one parser.
pub fn preset(name: &str) -> Result<ExperimentFile> {
    let text = match name {
        // Gradient-based comparison on MNIST logistic regression:
        // α = 0.02, b = 3, D = 10, ξ_d = 0.8/D, t̄ = 100, M = 10 workers.
        "paper-gd-suite" => {
            "model = logistic\n\
             dataset = mnist\n\
             workers = 10\n\
             lambda = 0.01\n\
             alpha = 0.02\n\
             bits = 3\n\
             bigD = 10\n\
             xi = 0.08\n\
             max-staleness = 100\n\
             iters = 30000\n\
             target-residual = 1e-6\n\
             seed = 1\n\
             [gd]\n\
             [qgd]\n\
             [lag]\n\
             [laq]\n"
        }
        // Mini-batch stochastic comparison: batch 500, α = 0.008.
        "paper-sgd-suite" => {
            "model = logistic\n\
             dataset = mnist\n\
             workers = 10\n\
             lambda = 0.01\n\
             alpha = 0.008\n\
             bits = 3\n\
             bigD = 10\n\
             xi = 0.08\n\
             max-staleness = 100\n\
             iters = 1000\n\
             minibatch = 500\n\
             seed = 1\n\
             [sgd]\n\
             [slaq]\n"
        }
        // Desk-scale strongly convex quadratic with the conservative recipe.
        "quadratic-recipe" => {
            "model = quadratic\n\
             p = 20\n\
             mu = 1\n\
             L = 10\n\
             workers = 5\n\
             alpha = 0.0125\n\
             bits = 8\n\
             bigD = 5\n\
             xi = 0.0125\n\
             max-staleness = 20\n\
             iters = 200000\n\
             target-residual = 1e-10\n\
             seed = 1\n\
             [gd]\n\
             [qgd]\n\
             [lag]\n\
             [laq]\n"
        }
        other => bail!("unknown preset {other:?} (available: paper-gd-suite, paper-sgd-suite, quadratic-recipe)"),
    };
    parse_experiment(text)
}

/// Built-in defaults, the lowest-precedence layer.
pub fn builtin_defaults() -> Settings {
    Settings {
        model: Some("quadratic".to_string()),
        dataset: None,
        workers: Some(10),
        partition: Some("uniform".to_string()),
        alpha: Some(0.02),
        bits: Some(3),
        big_d: Some(10),
        xi: None, // derived from bigD when absent: the 0.8/D preset
        max_staleness: Some(100),
        iters: Some(1000),
        target_residual: None,
        minibatch: Some(500),
        seed: Some(1),
        lambda: Some(0.01),
        dim: Some(20),
        mu: Some(1.0),
        smoothness: Some(10.0),
        samples: Some(500),
        features: Some(10),
        classes: Some(2),
        hidden: Some(200),
        out: Some(PathBuf::from("runs")),
    }
}

/// Final per-run configuration after all layers are merged.
#[derive(Debug, Clone)]
pub struct ResolvedRun {
    pub algorithm: Algorithm,
    pub settings: Settings,
}

/// Applies defaults < globals < section < flags and returns one resolved
/// run per requested algorithm.
pub fn resolve(
    file: &ExperimentFile,
    flags: &Settings,
    flag_algorithm: Option<Algorithm>,
) -> Result<Vec<ResolvedRun>> {
    let base = builtin_defaults().merged(&file.globals);
    let mut runs = Vec::new();
    if file.sections.is_empty() {
        let algorithm = flag_algorithm
            .ok_or_else(|| anyhow!("no algorithm given: pass --algorithm or use sections"))?;
        runs.push(ResolvedRun {
            algorithm,
            settings: base.merged(flags),
        });
    } else {
        for (algorithm, section) in &file.sections {
            if let Some(only) = flag_algorithm {
                if only != *algorithm {
                    continue;
                }
            }
            runs.push(ResolvedRun {
                algorithm: *algorithm,
                settings: base.merged(section).merged(flags),
            });
        }
        if runs.is_empty() {
            bail!("--algorithm does not match any section in the experiment file");
        }
    }
    Ok(runs)
}
