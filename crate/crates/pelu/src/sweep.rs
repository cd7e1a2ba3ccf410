//! Runs one base configuration under several activation / parameter
//! configuration variants and several seeds, and tabulates the outcome.
//!
//! ```json
//! {
//!   "base": { ...run config... },
//!   "variants": [ { "param_config": "a_b" }, { "activation": "elu" } ],
//!   "n_seeds": 5
//! }
//! ```
//!
//! Seed `i` of every variant uses `base.seed + i`, so variants are compared
//! on identical data, initial weights and batch order.

use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use pelu_core::{ActivationKind, ParamConfig};
use serde::{Deserialize, Serialize};

use crate::config::{read_json, ActivationSpec, ParamConfigSpec, RunConfig};
use crate::csv_out::{num, write_csv};
use crate::error::CliError;
use crate::runner::{load_splits, train_on};

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Variant {
    #[serde(default)]
    pub activation: Option<ActivationSpec>,
    #[serde(default)]
    pub param_config: Option<ParamConfigSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub base: RunConfig,
    pub variants: Vec<Variant>,
    pub n_seeds: usize,
    /// Worker threads; defaults to the available parallelism.
    #[serde(default)]
    pub jobs: Option<usize>,
}

impl SweepConfig {
    pub fn validate(&self, path: &Path) -> Result<(), CliError> {
        let field_err = |field: &str, message: &str| CliError::Config {
            path: path.to_path_buf(),
            field: field.into(),
            message: message.into(),
        };
        if self.n_seeds == 0 {
            return Err(field_err("n_seeds", "must be at least 1"));
        }
        if self.variants.is_empty() {
            return Err(field_err("variants", "need at least one variant"));
        }
        if self.jobs == Some(0) {
            return Err(field_err("jobs", "must be at least 1"));
        }
        for i in 0..self.variants.len() {
            self.variant_config(i, 0).validate(path)?;
        }
        Ok(())
    }

    /// The run configuration for variant `v` and seed index `s`.
    pub fn variant_config(&self, v: usize, s: usize) -> RunConfig {
        let variant = self.variants[v];
        let mut config = self.base.clone();
        if let Some(activation) = variant.activation {
            config.activation = activation;
        }
        if let Some(param_config) = variant.param_config {
            config.param_config = param_config;
        }
        config.seed = self.base.seed.wrapping_add(s as u64);
        config
    }

    /// `activation` for non-PELU variants, `pelu/<config>` otherwise.
    pub fn variant_label(&self, v: usize) -> String {
        let config = self.variant_config(v, 0);
        let kind = ActivationKind::from(config.activation);
        match kind {
            ActivationKind::Pelu => {
                format!("pelu/{}", ParamConfig::from(config.param_config).name())
            }
            ActivationKind::LeakyRelu { slope } => format!("lrelu/{slope}"),
            other => other.name().to_string(),
        }
    }
}

pub fn load_sweep_config(path: &Path) -> Result<SweepConfig, CliError> {
    let config: SweepConfig = read_json(path)?;
    config.validate(path)?;
    Ok(config)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SeedResult {
    pub variant: usize,
    pub seed: u64,
    pub first_iter_loss: Option<f64>,
    pub final_train_loss: Option<f64>,
    pub final_train_err_pct: Option<f64>,
    pub final_test_err_pct: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VariantSummary {
    pub label: String,
    pub activation: String,
    pub param_config: String,
    pub n_seeds: usize,
    pub mean_test_err_pct: Option<f64>,
    pub std_test_err_pct: Option<f64>,
    pub mean_train_loss: Option<f64>,
    pub std_train_loss: Option<f64>,
    pub mean_first_iter_loss: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepOutcome {
    pub summaries: Vec<VariantSummary>,
    /// Ordered by variant, then seed.
    pub runs: Vec<SeedResult>,
}

/// Mean and sample standard deviation; `None` when any value is missing.
fn mean_std(values: impl Iterator<Item = Option<f64>>) -> (Option<f64>, Option<f64>) {
    let Some(values) = values.collect::<Option<Vec<f64>>>() else {
        return (None, None);
    };
    if values.is_empty() {
        return (None, None);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let std = if values.len() < 2 {
        0.0
    } else {
        (values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0)).sqrt()
    };
    (Some(mean), Some(std))
}

fn run_one(
    sweep: &SweepConfig,
    v: usize,
    s: usize,
    base_dir: &Path,
) -> Result<SeedResult, CliError> {
    let config = sweep.variant_config(v, s);
    let splits = load_splits(&config, base_dir)?;
    let outcome = train_on(&config, &splits)?;
    let last = outcome.final_metrics();
    Ok(SeedResult {
        variant: v,
        seed: config.seed,
        first_iter_loss: outcome.first_iter_loss,
        final_train_loss: last.map(|m| m.train_loss),
        final_train_err_pct: last.map(|m| m.train_err_pct),
        final_test_err_pct: last.and_then(|m| m.test_err_pct),
    })
}

/// Runs every (variant, seed) pair. Runs are independent, so they are
/// spread over worker threads; results do not depend on the thread count.
pub fn run_sweep(sweep: &SweepConfig, base_dir: &Path) -> Result<SweepOutcome, CliError> {
    let jobs: Vec<(usize, usize)> = (0..sweep.variants.len())
        .flat_map(|v| (0..sweep.n_seeds).map(move |s| (v, s)))
        .collect();
    let workers = sweep
        .jobs
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
        .min(jobs.len());
    let next = AtomicUsize::new(0);
    let results: Mutex<Vec<Option<Result<SeedResult, CliError>>>> =
        Mutex::new((0..jobs.len()).map(|_| None).collect());
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(&(v, s)) = jobs.get(i) else { break };
                let result = run_one(sweep, v, s, base_dir);
                results
                    .lock()
                    .expect("no worker panics while holding the lock")[i] = Some(result);
            });
        }
    });
    let runs = results
        .into_inner()
        .expect("workers have finished")
        .into_iter()
        .map(|r| r.expect("every job ran"))
        .collect::<Result<Vec<_>, _>>()?;

    let summaries = (0..sweep.variants.len())
        .map(|v| {
            let config = sweep.variant_config(v, 0);
            let kind = ActivationKind::from(config.activation);
            let mine: Vec<&SeedResult> = runs.iter().filter(|r| r.variant == v).collect();
            let (mean_test_err_pct, std_test_err_pct) =
                mean_std(mine.iter().map(|r| r.final_test_err_pct));
            let (mean_train_loss, std_train_loss) =
                mean_std(mine.iter().map(|r| r.final_train_loss));
            let (mean_first_iter_loss, _) = mean_std(mine.iter().map(|r| r.first_iter_loss));
            VariantSummary {
                label: sweep.variant_label(v),
                activation: kind.name().to_string(),
                param_config: if kind == ActivationKind::Pelu {
                    ParamConfig::from(config.param_config).name().to_string()
                } else {
                    String::new()
                },
                n_seeds: mine.len(),
                mean_test_err_pct,
                std_test_err_pct,
                mean_train_loss,
                std_train_loss,
                mean_first_iter_loss,
            }
        })
        .collect();
    Ok(SweepOutcome { summaries, runs })
}

pub const SWEEP_HEADER: [&str; 9] = [
    "variant",
    "activation",
    "param_config",
    "n_seeds",
    "mean_test_err_pct",
    "std_test_err_pct",
    "mean_train_loss",
    "std_train_loss",
    "mean_first_iter_loss",
];

pub const SWEEP_RUNS_HEADER: [&str; 6] = [
    "variant",
    "seed",
    "first_iter_loss",
    "final_train_loss",
    "final_train_err_pct",
    "final_test_err_pct",
];

fn opt(v: Option<f64>) -> String {
    v.map(num).unwrap_or_default()
}

/// Writes `sweep.csv` (one row per variant) and `sweep_runs.csv` (one row
/// per variant and seed).
pub fn write_sweep(outcome: &SweepOutcome, out_dir: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(out_dir).map_err(|e| CliError::io(out_dir, e))?;
    write_csv(
        &out_dir.join("sweep.csv"),
        &SWEEP_HEADER,
        outcome.summaries.iter().map(|s| {
            vec![
                s.label.clone(),
                s.activation.clone(),
                s.param_config.clone(),
                s.n_seeds.to_string(),
                opt(s.mean_test_err_pct),
                opt(s.std_test_err_pct),
                opt(s.mean_train_loss),
                opt(s.std_train_loss),
                opt(s.mean_first_iter_loss),
            ]
        }),
    )?;
    write_csv(
        &out_dir.join("sweep_runs.csv"),
        &SWEEP_RUNS_HEADER,
        outcome.runs.iter().map(|r| {
            vec![
                outcome.summaries[r.variant].label.clone(),
                r.seed.to_string(),
                opt(r.first_iter_loss),
                opt(r.final_train_loss),
                opt(r.final_train_err_pct),
                opt(r.final_test_err_pct),
            ]
        }),
    )
}
