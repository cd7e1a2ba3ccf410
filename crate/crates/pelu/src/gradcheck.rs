//! Finite-difference gradient checks over a fixed set of small networks.
//!
//! Each check builds a network, randomises the learnable activation and
//! batch-norm parameters away from their initial values, and compares every
//! registered gradient against central differences.

use std::fmt;
use std::str::FromStr;

use pelu_core::gradcheck::{check_network, GradcheckOptions, GradcheckReport};
use pelu_core::layers::{
    Activation, BatchNorm, Conv2d, Dropout, Flatten, LayerNode, Linear, MaxPool2x2, ParamGroup,
};
use pelu_core::{ActivationKind, Network, ParamConfig, PeluParams, Rng, Tensor};

use crate::error::CliError;

/// Default leaky ReLU slope when none is given.
pub const DEFAULT_LRELU_SLOPE: f64 = 0.1;

/// Entries sampled per parameter tensor for the larger architectures.
const SAMPLED_ENTRIES: usize = 12;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Arch {
    Mlp(Vec<usize>),
    /// `conv3x3 -> act -> maxpool -> flatten -> linear`.
    Conv,
    /// Every layer type in one network, batch norm and dropout included.
    Zoo,
    SmallnetLite,
}

impl Arch {
    pub fn defaults() -> Vec<Arch> {
        vec![
            Arch::Mlp(vec![2, 8, 3]),
            Arch::Mlp(vec![4, 6, 5, 3]),
            Arch::Conv,
            Arch::Zoo,
            Arch::SmallnetLite,
        ]
    }
}

impl fmt::Display for Arch {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Arch::Mlp(widths) => {
                let widths: Vec<String> = widths.iter().map(usize::to_string).collect();
                write!(f, "mlp:{}", widths.join(","))
            }
            Arch::Conv => f.write_str("conv"),
            Arch::Zoo => f.write_str("zoo"),
            Arch::SmallnetLite => f.write_str("smallnet-lite"),
        }
    }
}

impl FromStr for Arch {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "conv" => Ok(Arch::Conv),
            "zoo" => Ok(Arch::Zoo),
            "smallnet-lite" => Ok(Arch::SmallnetLite),
            _ => {
                let widths = s.strip_prefix("mlp:").ok_or_else(|| {
                    format!("unknown architecture `{s}` (mlp:W,W,..., conv, zoo, smallnet-lite)")
                })?;
                let widths = widths
                    .split(',')
                    .map(|w| w.trim().parse::<usize>().ok().filter(|&w| w > 0))
                    .collect::<Option<Vec<_>>>()
                    .filter(|w| w.len() >= 2)
                    .ok_or_else(|| format!("bad mlp widths in `{s}`"))?;
                Ok(Arch::Mlp(widths))
            }
        }
    }
}

/// Parses `pelu`, `elu`, `relu`, `lrelu`, `lrelu:SLOPE` or `prelu`.
pub fn parse_activation(s: &str) -> Result<ActivationKind, String> {
    match s {
        "pelu" => Ok(ActivationKind::Pelu),
        "elu" => Ok(ActivationKind::Elu),
        "relu" => Ok(ActivationKind::Relu),
        "prelu" => Ok(ActivationKind::Prelu),
        "lrelu" => Ok(ActivationKind::LeakyRelu {
            slope: DEFAULT_LRELU_SLOPE,
        }),
        _ => s
            .strip_prefix("lrelu:")
            .and_then(|v| v.parse::<f64>().ok())
            .filter(|&slope| slope > 0.0)
            .map(|slope| ActivationKind::LeakyRelu { slope })
            .ok_or_else(|| {
                format!("unknown activation `{s}` (pelu, elu, relu, lrelu[:SLOPE], prelu)")
            }),
    }
}

pub fn all_activations() -> Vec<ActivationKind> {
    vec![
        ActivationKind::Pelu,
        ActivationKind::Elu,
        ActivationKind::Relu,
        ActivationKind::LeakyRelu {
            slope: DEFAULT_LRELU_SLOPE,
        },
        ActivationKind::Prelu,
    ]
}

pub fn parse_group(s: &str) -> Result<ParamGroup, String> {
    ParamGroup::ALL
        .into_iter()
        .find(|g| g.name() == s)
        .ok_or_else(|| format!("unknown parameter group `{s}`"))
}

fn act(kind: ActivationKind, config: ParamConfig) -> Result<LayerNode, CliError> {
    Ok(LayerNode::Activation(Activation::new(kind, config)?))
}

/// Network, input batch and labels for one architecture.
pub fn build_case(
    arch: &Arch,
    kind: ActivationKind,
    config: ParamConfig,
    rng: &mut Rng,
) -> Result<(Network, Tensor, Vec<usize>), CliError> {
    let (net, x, classes) = match arch {
        Arch::Mlp(widths) => {
            let net = Network::mlp(widths, kind, config, rng)?;
            let x = Tensor::randn(&[4, widths[0]], 1.0, rng);
            (net, x, widths[widths.len() - 1])
        }
        Arch::Conv => {
            let mut net = Network::new();
            net.push(LayerNode::Conv2d(Conv2d::new(2, 3, rng)?))
                .push(act(kind, config)?)
                .push(LayerNode::MaxPool2x2(MaxPool2x2::new()))
                .push(LayerNode::Flatten(Flatten::default()))
                .push(LayerNode::Linear(Linear::new(3 * 3 * 3, 4, rng)?));
            (net, Tensor::randn(&[3, 2, 6, 6], 0.5, rng), 4)
        }
        Arch::Zoo => {
            let mut net = Network::new();
            net.push(LayerNode::Conv2d(Conv2d::new(1, 3, rng)?))
                .push(LayerNode::BatchNorm(BatchNorm::new(3)))
                .push(act(kind, config)?)
                .push(LayerNode::MaxPool2x2(MaxPool2x2::new()))
                .push(LayerNode::Dropout(Dropout::new(
                    0.3,
                    Rng::new(rng.next_u64()),
                )?))
                .push(LayerNode::Flatten(Flatten::default()))
                .push(LayerNode::Linear(Linear::new(3 * 2 * 2, 5, rng)?))
                .push(LayerNode::BatchNorm(BatchNorm::new(5)))
                .push(act(kind, config)?)
                .push(LayerNode::Dropout(Dropout::new(
                    0.2,
                    Rng::new(rng.next_u64()),
                )?))
                .push(LayerNode::Linear(Linear::new(5, 3, rng)?));
            (net, Tensor::randn(&[4, 1, 4, 4], 1.0, rng), 3)
        }
        Arch::SmallnetLite => {
            let net = Network::smallnet_lite([1, 8, 8], 10, kind, config, rng)?;
            (net, Tensor::randn(&[2, 1, 8, 8], 0.1, rng), 10)
        }
    };
    let labels = (0..x.shape()[0]).map(|_| rng.below(classes)).collect();
    let mut net = net;
    randomize_params(&mut net, rng)?;
    Ok((net, x, labels))
}

/// Moves biases and learnable activation and batch-norm parameters off their
/// initial values so their gradients are exercised in general position.
/// PELU layers get the same effective `(a, b)` whatever the parameter
/// configuration, so every configuration checks the same function.
fn randomize_params(net: &mut Network, rng: &mut Rng) -> Result<(), CliError> {
    for params in net.pelu_layers_mut() {
        let (a, b) = (rng.uniform_range(0.7, 1.5), rng.uniform_range(0.7, 1.5));
        *params = PeluParams::from_effective(a, b, params.config)?;
    }
    for view in net.params() {
        let (lo, hi) = match view.group {
            ParamGroup::PreluSlope => (0.05, 0.5),
            ParamGroup::BatchNormGamma => (0.5, 1.5),
            ParamGroup::BatchNormBeta => (-0.3, 0.3),
            // Zero biases put a ReLU exactly on its kink whenever the layer
            // below is silent for a sample.
            ParamGroup::LinearBias | ParamGroup::ConvBias => (-0.2, 0.2),
            _ => continue,
        };
        for v in view.value.iter_mut() {
            *v = rng.uniform_range(lo, hi);
        }
    }
    Ok(())
}

#[derive(Debug, Clone)]
pub struct CaseReport {
    pub arch: Arch,
    pub activation: ActivationKind,
    pub config: ParamConfig,
    pub report: GradcheckReport,
}

impl CaseReport {
    pub fn label(&self) -> String {
        match self.activation {
            ActivationKind::Pelu => format!("{} pelu/{}", self.arch, self.config.name()),
            ActivationKind::LeakyRelu { slope } => format!("{} lrelu:{slope}", self.arch),
            other => format!("{} {}", self.arch, other.name()),
        }
    }
}

#[derive(Debug, Clone)]
pub struct GradcheckPlan {
    pub archs: Vec<Arch>,
    pub activations: Vec<ActivationKind>,
    /// Used for PELU only; other activations run once.
    pub configs: Vec<ParamConfig>,
    pub seed: u64,
    pub corrupt: Option<ParamGroup>,
}

impl Default for GradcheckPlan {
    fn default() -> Self {
        Self {
            archs: Arch::defaults(),
            activations: all_activations(),
            configs: ParamConfig::ALL.to_vec(),
            seed: 0,
            corrupt: None,
        }
    }
}

pub fn run_plan(plan: &GradcheckPlan) -> Result<Vec<CaseReport>, CliError> {
    let mut out = Vec::new();
    for (ai, arch) in plan.archs.iter().enumerate() {
        for &kind in &plan.activations {
            let configs: &[ParamConfig] = if kind == ActivationKind::Pelu {
                &plan.configs
            } else {
                &[ParamConfig::AInvB]
            };
            for &config in configs {
                let mut rng = Rng::derive(plan.seed, ai as u64);
                let (net, x, labels) = build_case(arch, kind, config, &mut rng)?;
                let opts = GradcheckOptions {
                    max_entries: (*arch == Arch::SmallnetLite).then_some(SAMPLED_ENTRIES),
                    seed: plan.seed,
                    corrupt: plan.corrupt,
                    ..GradcheckOptions::default()
                };
                let report = check_network(&net, &x, &labels, &opts)?;
                out.push(CaseReport {
                    arch: arch.clone(),
                    activation: kind,
                    config,
                    report,
                });
            }
        }
    }
    Ok(out)
}

/// One line per parameter group.
pub fn format_reports(cases: &[CaseReport]) -> String {
    let mut s = String::new();
    for case in cases {
        for g in &case.report.groups {
            let status = if g.max_rel_err <= case.report.tolerance {
                "ok"
            } else {
                "FAIL"
            };
            s += &format!(
                "{:<30} {:<22} checked={:<4} max_rel_err={:.3e} {status}\n",
                case.label(),
                g.name(),
                g.checked,
                g.max_rel_err
            );
        }
    }
    s
}

/// `Err` naming every failing group when any check exceeds its tolerance.
pub fn verdict(cases: &[CaseReport]) -> Result<(), CliError> {
    let failures: Vec<String> = cases
        .iter()
        .flat_map(|c| {
            c.report.failures().map(move |g| {
                format!(
                    "{} {} (max rel err {:.3e})",
                    c.label(),
                    g.name(),
                    g.max_rel_err
                )
            })
        })
        .collect();
    if failures.is_empty() {
        Ok(())
    } else {
        Err(CliError::Numerical(format!(
            "gradient check failed for {}",
            failures.join("; ")
        )))
    }
}
