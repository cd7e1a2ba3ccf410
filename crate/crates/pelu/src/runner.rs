//! Seeded training runs: data loading, the minibatch loop, per-epoch
//! evaluation and the files a run leaves behind.
//!
//! Every random choice comes from a sub-stream of the run seed, so a run is
//! reproducible bit for bit from its configuration.

use std::path::{Path, PathBuf};

use pelu_core::data::{batches, gen_blobs, pixel_mean, subtract_mean, Dataset};
use pelu_core::layers::{argmax_rows, softmax_xent, Flatten, LayerNode};
use pelu_core::{ActivationKind, Mode, Network, ParamConfig, Rng, Sgd, SgdConfig, Tensor};
use serde_json::json;

use crate::config::{Architecture, DatasetSpec, RunConfig};
use crate::csv_out::{num, write_csv};
use crate::error::CliError;
use crate::idx::load_idx;

const STREAM_TRAIN_DATA: u64 = 0;
const STREAM_TEST_DATA: u64 = 1;
const STREAM_INIT: u64 = 2;
const STREAM_BATCHES: u64 = 3;

/// Rows evaluated per forward pass when scoring a whole split.
const EVAL_CHUNK: usize = 512;

pub const METRICS_HEADER: [&str; 6] = [
    "epoch",
    "train_loss",
    "train_err_pct",
    "test_err_pct",
    "lr",
    "wd",
];
pub const PROGRESSION_HEADER: [&str; 7] = [
    "iteration",
    "layer_index",
    "a_eff",
    "b_eff",
    "slope",
    "neg_saturation",
    "train_loss",
];

#[derive(Debug, Clone, PartialEq)]
pub struct EpochMetrics {
    pub epoch: usize,
    /// Mean cross-entropy over the full training split in eval mode.
    pub train_loss: f64,
    pub train_err_pct: f64,
    pub test_err_pct: Option<f64>,
    pub lr: f64,
    pub wd: f64,
}

/// State of one PELU layer at a logged iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct ProgressionRecord {
    pub iteration: usize,
    pub layer_index: usize,
    pub a_eff: f64,
    pub b_eff: f64,
    pub slope: f64,
    pub neg_saturation: f64,
    /// Loss of the minibatch that produced this iteration's update.
    pub train_loss: f64,
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub metrics: Vec<EpochMetrics>,
    pub progression: Vec<ProgressionRecord>,
    /// Loss of the very first training minibatch, before any update.
    pub first_iter_loss: Option<f64>,
    pub network: Network,
}

impl RunOutcome {
    pub fn final_metrics(&self) -> Option<&EpochMetrics> {
        self.metrics.last()
    }
}

pub struct Splits {
    pub train: Dataset,
    pub test: Option<Dataset>,
}

fn resolve(base: &Path, path: &Path) -> PathBuf {
    if path.is_absolute() {
        path.to_path_buf()
    } else {
        base.join(path)
    }
}

/// Builds the train and test splits. Relative IDX paths are taken relative
/// to `base_dir`.
pub fn load_splits(config: &RunConfig, base_dir: &Path) -> Result<Splits, CliError> {
    match &config.dataset {
        &DatasetSpec::Blobs {
            n_per_class,
            num_classes,
            dim,
            spread,
            test_n_per_class,
        } => {
            let seed_for = |stream| Rng::derive(config.seed, stream).next_u64();
            let train = gen_blobs(
                seed_for(STREAM_TRAIN_DATA),
                n_per_class,
                num_classes,
                dim,
                spread,
            )?;
            let test_n = test_n_per_class.unwrap_or((n_per_class / 4).max(1));
            let test = match test_n {
                0 => None,
                n => Some(gen_blobs(
                    seed_for(STREAM_TEST_DATA),
                    n,
                    num_classes,
                    dim,
                    spread,
                )?),
            };
            Ok(Splits { train, test })
        }
        DatasetSpec::Idx {
            train_images,
            train_labels,
            test_images,
            test_labels,
            mean_subtraction,
        } => {
            let mut train = load_idx(
                &resolve(base_dir, train_images),
                &resolve(base_dir, train_labels),
            )?;
            let mut test = match (test_images, test_labels) {
                (Some(images), Some(labels)) => Some(load_idx(
                    &resolve(base_dir, images),
                    &resolve(base_dir, labels),
                )?),
                (None, None) => None,
                _ => {
                    return Err(CliError::Usage(
                        "dataset.idx needs both test_images and test_labels, or neither".into(),
                    ))
                }
            };
            if let Some(t) = &mut test {
                if t.sample_shape() != train.sample_shape() {
                    return Err(CliError::Usage(format!(
                        "test samples {:?} differ in shape from training samples {:?}",
                        t.sample_shape(),
                        train.sample_shape()
                    )));
                }
                let classes = train.num_classes.max(t.num_classes);
                train.num_classes = classes;
                t.num_classes = classes;
            }
            if *mean_subtraction {
                let mean = pixel_mean(&train)?;
                subtract_mean(&mut train, &mean)?;
                if let Some(t) = &mut test {
                    subtract_mean(t, &mean)?;
                }
            }
            Ok(Splits { train, test })
        }
    }
}

/// Builds the configured network for samples of `sample_shape`.
pub fn build_network(
    config: &RunConfig,
    sample_shape: &[usize],
    num_classes: usize,
    rng: &mut Rng,
) -> Result<Network, CliError> {
    let kind = ActivationKind::from(config.activation);
    let param_config = ParamConfig::from(config.param_config);
    match &config.architecture {
        Architecture::Mlp { widths } => {
            let features: usize = sample_shape.iter().product();
            if widths[0] != features {
                return Err(CliError::Usage(format!(
                    "mlp input width {} does not match {features} input features",
                    widths[0]
                )));
            }
            if widths[widths.len() - 1] != num_classes {
                return Err(CliError::Usage(format!(
                    "mlp output width {} does not match {num_classes} classes",
                    widths[widths.len() - 1]
                )));
            }
            let mlp = Network::mlp(widths, kind, param_config, rng)?;
            if sample_shape.len() == 1 {
                return Ok(mlp);
            }
            let mut net = Network::new();
            net.push(LayerNode::Flatten(Flatten::default()));
            for layer in mlp.layers() {
                net.push(layer.clone());
            }
            Ok(net)
        }
        Architecture::SmallnetLite => match *sample_shape {
            [c, h, w] => Ok(Network::smallnet_lite(
                [c, h, w],
                num_classes,
                kind,
                param_config,
                rng,
            )?),
            _ => Err(CliError::Usage(format!(
                "smallnet-lite needs [channels, height, width] samples, got {sample_shape:?}"
            ))),
        },
    }
}

/// Mean loss and error percentage over a whole split, in eval mode.
pub fn evaluate(net: &mut Network, ds: &Dataset) -> Result<(f64, f64), CliError> {
    let mut loss_sum = 0.0;
    let mut wrong = 0usize;
    let indices: Vec<usize> = (0..ds.len()).collect();
    for chunk in indices.chunks(EVAL_CHUNK) {
        let (x, labels) = ds.gather(chunk)?;
        let logits = net.forward(&x, Mode::Eval)?;
        let (loss, _) = softmax_xent(&logits, &labels)?;
        loss_sum += loss * chunk.len() as f64;
        wrong += argmax_rows(&logits)?
            .iter()
            .zip(&labels)
            .filter(|(p, l)| p != l)
            .count();
    }
    let n = ds.len().max(1) as f64;
    Ok((loss_sum / n, 100.0 * wrong as f64 / n))
}

fn progression(
    net: &Network,
    iteration: usize,
    train_loss: f64,
) -> impl Iterator<Item = ProgressionRecord> + '_ {
    net.pelu_layers().map(move |(layer_index, params)| {
        let (a, b) = params.effective();
        ProgressionRecord {
            iteration,
            layer_index,
            a_eff: a,
            b_eff: b,
            slope: a / b,
            neg_saturation: a,
            train_loss,
        }
    })
}

/// Trains on already loaded splits.
pub fn train_on(config: &RunConfig, splits: &Splits) -> Result<RunOutcome, CliError> {
    let train = &splits.train;
    let mut init_rng = Rng::derive(config.seed, STREAM_INIT);
    let mut batch_rng = Rng::derive(config.seed, STREAM_BATCHES);
    let mut net = build_network(
        config,
        train.sample_shape(),
        train.num_classes,
        &mut init_rng,
    )?;
    let mut sgd = Sgd::new(SgdConfig::from(&config.optimizer))?;

    let mut metrics = Vec::with_capacity(config.epochs);
    let mut records = Vec::new();
    let mut first_iter_loss = None;
    let mut iteration = 0usize;
    for epoch in 1..=config.epochs {
        let (lr, wd) = config.schedule_at(epoch);
        sgd.config.learning_rate = lr;
        sgd.config.weight_decay = wd;
        for (x, labels) in batches(
            train,
            config.batch_size,
            &mut batch_rng,
            config.augment.into(),
        )? {
            let logits = net.forward(&x, Mode::Train)?;
            let (loss, dlogits) = softmax_xent(&logits, &labels)?;
            iteration += 1;
            if !loss.is_finite() {
                return Err(CliError::Numerical(format!(
                    "training loss became {loss} at epoch {epoch}, iteration {iteration}"
                )));
            }
            first_iter_loss.get_or_insert(loss);
            net.backward(&dlogits)?;
            sgd.step(&mut net)?;
            if iteration.is_multiple_of(config.log_every) {
                records.extend(progression(&net, iteration, loss));
            }
        }
        let (train_loss, train_err_pct) = evaluate(&mut net, train)?;
        if !train_loss.is_finite() {
            return Err(CliError::Numerical(format!(
                "training-set loss became {train_loss} after epoch {epoch}"
            )));
        }
        let test_err_pct = match &splits.test {
            Some(test) => Some(evaluate(&mut net, test)?.1),
            None => None,
        };
        metrics.push(EpochMetrics {
            epoch,
            train_loss,
            train_err_pct,
            test_err_pct,
            lr,
            wd,
        });
    }
    Ok(RunOutcome {
        metrics,
        progression: records,
        first_iter_loss,
        network: net,
    })
}

pub fn train(config: &RunConfig, base_dir: &Path) -> Result<RunOutcome, CliError> {
    let splits = load_splits(config, base_dir)?;
    train_on(config, &splits)
}

pub fn metrics_rows(metrics: &[EpochMetrics]) -> impl Iterator<Item = Vec<String>> + '_ {
    metrics.iter().map(|m| {
        vec![
            m.epoch.to_string(),
            num(m.train_loss),
            num(m.train_err_pct),
            m.test_err_pct.map(num).unwrap_or_default(),
            num(m.lr),
            num(m.wd),
        ]
    })
}

pub fn progression_rows(records: &[ProgressionRecord]) -> impl Iterator<Item = Vec<String>> + '_ {
    records.iter().map(|r| {
        vec![
            r.iteration.to_string(),
            r.layer_index.to_string(),
            num(r.a_eff),
            num(r.b_eff),
            num(r.slope),
            num(r.neg_saturation),
            num(r.train_loss),
        ]
    })
}

/// Final parameters of every layer, plus the configuration that produced
/// them.
pub fn model_json(config: &RunConfig, net: &mut Network) -> serde_json::Value {
    let kinds: Vec<&str> = net.layers().iter().map(|l| l.kind_name()).collect();
    let pelu: Vec<_> = net
        .pelu_layers()
        .map(|(layer, p)| {
            let (a, b) = p.effective();
            json!({ "layer": layer, "config": p.config.name(), "p": p.p, "q": p.q, "a": a, "b": b })
        })
        .collect();
    let params: Vec<_> = net
        .params()
        .into_iter()
        .map(|v| json!({ "layer": v.layer, "group": v.group.name(), "values": v.value }))
        .collect();
    json!({ "config": config, "layers": kinds, "pelu": pelu, "parameters": params })
}

/// Writes `metrics.csv`, `progression.csv` and `model.json` into `out_dir`.
pub fn write_outputs(
    config: &RunConfig,
    outcome: &mut RunOutcome,
    out_dir: &Path,
) -> Result<(), CliError> {
    std::fs::create_dir_all(out_dir).map_err(|e| CliError::io(out_dir, e))?;
    write_csv(
        &out_dir.join("metrics.csv"),
        &METRICS_HEADER,
        metrics_rows(&outcome.metrics),
    )?;
    write_csv(
        &out_dir.join("progression.csv"),
        &PROGRESSION_HEADER,
        progression_rows(&outcome.progression),
    )?;
    let model_path = out_dir.join("model.json");
    let model = model_json(config, &mut outcome.network);
    let text = serde_json::to_string_pretty(&model).expect("model JSON holds only finite numbers");
    std::fs::write(&model_path, text + "\n").map_err(|e| CliError::io(&model_path, e))
}

/// Evaluates the network's forward loss on one batch; exposed for sanity
/// checks that compare parameterisations.
pub fn batch_loss(net: &mut Network, x: &Tensor, labels: &[usize]) -> Result<f64, CliError> {
    let logits = net.forward(x, Mode::Eval)?;
    Ok(softmax_xent(&logits, labels)?.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::parse_json;

    fn config(epochs: usize) -> RunConfig {
        let text = format!(
            r#"{{
                "architecture": {{"mlp": {{"widths": [2, 8, 3]}}}},
                "optimizer": {{"learning_rate": 0.05}},
                "epochs": {epochs}, "batch_size": 16, "seed": 3, "log_every": 2,
                "dataset": {{"blobs": {{"n_per_class": 20, "num_classes": 3, "dim": 2, "spread": 0.5}}}}
            }}"#
        );
        parse_json(&text, Path::new("inline")).unwrap()
    }

    #[test]
    fn deterministic_under_seed() {
        let a = train(&config(3), Path::new(".")).unwrap();
        let b = train(&config(3), Path::new(".")).unwrap();
        assert_eq!(a.metrics, b.metrics);
        assert_eq!(a.progression, b.progression);
        assert_eq!(a.metrics.len(), 3);
        // 60 samples in batches of 16 -> 4 iterations per epoch, logged every 2.
        assert_eq!(a.progression.len(), 6);
    }

    #[test]
    fn zero_epochs_trains_nothing() {
        let out = train(&config(0), Path::new(".")).unwrap();
        assert!(out.metrics.is_empty());
        assert!(out.first_iter_loss.is_none());
    }

    #[test]
    fn mlp_width_must_match_data() {
        let mut c = config(1);
        c.architecture = Architecture::Mlp {
            widths: vec![3, 8, 3],
        };
        assert!(matches!(train(&c, Path::new(".")), Err(CliError::Usage(_))));
        c.architecture = Architecture::SmallnetLite;
        assert!(matches!(train(&c, Path::new(".")), Err(CliError::Usage(_))));
    }

    #[test]
    fn divergence_is_a_numerical_failure() {
        let mut c = config(5);
        c.optimizer.learning_rate = 1e12;
        c.optimizer.momentum = 0.0;
        let err = train(&c, Path::new(".")).unwrap_err();
        assert_eq!(err.exit_code(), crate::EXIT_NUMERICAL, "{err}");
    }
}
