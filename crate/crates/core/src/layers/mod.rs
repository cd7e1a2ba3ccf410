//! Layers with explicit forward caches and hand-written backward passes.
//!
//! Every layer saves what its backward pass needs during a train-mode
//! forward. An eval-mode forward clears the cache, so backward is only valid
//! directly after a train-mode forward.

use alloc::string::String;
use alloc::vec::Vec;

use crate::error::{invalid, Error, Result};
use crate::rng::Rng;
use crate::tensor::Tensor;

mod activation;
mod batchnorm;
mod conv;
mod dropout;
mod linear;
mod loss;
mod network;
mod pool;

pub use self::activation::Activation;
pub use self::batchnorm::{BatchNorm, BN_EPSILON, BN_MOMENTUM};
pub use self::conv::{direct_conv3x3, Conv2d};
pub use self::dropout::Dropout;
pub use self::linear::Linear;
pub use self::loss::{argmax_rows, softmax_xent};
pub use self::network::{Flatten, LayerNode, Network};
pub use self::pool::MaxPool2x2;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// Coarse classification of a parameter, used for reporting and for the
/// optimizer's decay and clamp rules.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ParamGroup {
    LinearWeight,
    LinearBias,
    ConvWeight,
    ConvBias,
    BatchNormGamma,
    BatchNormBeta,
    PreluSlope,
    /// Stored PELU parameter `p` (`a` or `1/a`).
    PeluP,
    /// Stored PELU parameter `q` (`b` or `1/b`).
    PeluQ,
}

impl ParamGroup {
    pub const ALL: [ParamGroup; 9] = [
        ParamGroup::LinearWeight,
        ParamGroup::LinearBias,
        ParamGroup::ConvWeight,
        ParamGroup::ConvBias,
        ParamGroup::BatchNormGamma,
        ParamGroup::BatchNormBeta,
        ParamGroup::PreluSlope,
        ParamGroup::PeluP,
        ParamGroup::PeluQ,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ParamGroup::LinearWeight => "linear.weight",
            ParamGroup::LinearBias => "linear.bias",
            ParamGroup::ConvWeight => "conv.weight",
            ParamGroup::ConvBias => "conv.bias",
            ParamGroup::BatchNormGamma => "batchnorm.gamma",
            ParamGroup::BatchNormBeta => "batchnorm.beta",
            ParamGroup::PreluSlope => "prelu.slope",
            ParamGroup::PeluP => "pelu.p",
            ParamGroup::PeluQ => "pelu.q",
        }
    }

    /// Weight decay applies to weight matrices and PELU parameters only.
    pub fn decays(self) -> bool {
        matches!(
            self,
            ParamGroup::LinearWeight
                | ParamGroup::ConvWeight
                | ParamGroup::PeluP
                | ParamGroup::PeluQ
        )
    }

    pub fn is_activation(self) -> bool {
        matches!(
            self,
            ParamGroup::PreluSlope | ParamGroup::PeluP | ParamGroup::PeluQ
        )
    }

    /// Updated with the clamped rule and kept at or above the floor.
    pub fn is_constrained(self) -> bool {
        matches!(self, ParamGroup::PeluP | ParamGroup::PeluQ)
    }
}

/// Mutable view of one registered parameter.
#[derive(Debug)]
pub struct ParamView<'a> {
    pub layer: usize,
    pub group: ParamGroup,
    pub value: &'a mut [f64],
    pub grad: &'a mut [f64],
    pub velocity: &'a mut [f64],
}

impl ParamView<'_> {
    pub fn name(&self) -> String {
        alloc::format!("{}.{}", self.layer, self.group.name())
    }
}

/// Gradient snapshot of one parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct NamedGradient {
    pub layer: usize,
    pub group: ParamGroup,
    pub values: Vec<f64>,
}

/// Common interface of every layer.
pub trait Layer {
    fn forward(&mut self, x: &Tensor, mode: Mode) -> Result<Tensor>;

    /// Gradient w.r.t. the layer input; parameter gradients are stored on the
    /// layer.
    fn backward(&mut self, upstream: &Tensor) -> Result<Tensor>;

    fn params(&mut self, _layer: usize) -> Vec<ParamView<'_>> {
        Vec::new()
    }
}

/// Zero-mean normal tensor with variance `2 / fan_in`.
pub fn he_init(shape: &[usize], fan_in: usize, rng: &mut Rng) -> Result<Tensor> {
    if fan_in == 0 {
        return Err(invalid("he_init: fan_in must be positive"));
    }
    Ok(Tensor::randn(shape, libm::sqrt(2.0 / fan_in as f64), rng))
}

pub(crate) fn not_ready() -> Error {
    Error::BackwardBeforeForward { layer: 0 }
}

pub(crate) fn expect_shape(op: &'static str, expected: &[usize], found: &[usize]) -> Result<()> {
    if expected != found {
        return Err(Error::ShapeMismatch {
            op,
            expected: expected.to_vec(),
            found: found.to_vec(),
        });
    }
    Ok(())
}

pub(crate) fn expect_rank(op: &'static str, t: &Tensor, rank: usize) -> Result<()> {
    if t.rank() != rank {
        return Err(Error::ShapeMismatch {
            op,
            expected: alloc::vec![0; rank],
            found: t.shape().to_vec(),
        });
    }
    Ok(())
}
