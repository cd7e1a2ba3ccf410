use alloc::vec::Vec;

use super::{
    expect_rank, Activation, BatchNorm, Conv2d, Dropout, Layer, Linear, MaxPool2x2, Mode,
    NamedGradient, ParamView,
};
use crate::activations::{ActivationKind, ParamConfig, PeluParams};
use crate::error::{invalid, Error, Result};
use crate::rng::Rng;
use crate::tensor::Tensor;

/// Collapses `[n, ...]` to `[n, prod(...)]`.
#[derive(Debug, Clone, Default)]
pub struct Flatten {
    input_shape: Option<Vec<usize>>,
}

impl Layer for Flatten {
    fn forward(&mut self, x: &Tensor, mode: Mode) -> Result<Tensor> {
        if x.rank() < 2 {
            expect_rank("flatten", x, 2)?;
        }
        let n = x.shape()[0];
        self.input_shape = (mode == Mode::Train).then(|| x.shape().to_vec());
        x.clone().reshape(&[n, x.len() / n])
    }

    fn backward(&mut self, upstream: &Tensor) -> Result<Tensor> {
        let shape = self.input_shape.as_ref().ok_or_else(super::not_ready)?;
        upstream.clone().reshape(shape)
    }
}

#[derive(Debug, Clone)]
pub enum LayerNode {
    Linear(Linear),
    Conv2d(Conv2d),
    MaxPool2x2(MaxPool2x2),
    Dropout(Dropout),
    BatchNorm(BatchNorm),
    Activation(Activation),
    Flatten(Flatten),
}

impl LayerNode {
    fn as_layer(&mut self) -> &mut dyn Layer {
        match self {
            LayerNode::Linear(l) => l,
            LayerNode::Conv2d(l) => l,
            LayerNode::MaxPool2x2(l) => l,
            LayerNode::Dropout(l) => l,
            LayerNode::BatchNorm(l) => l,
            LayerNode::Activation(l) => l,
            LayerNode::Flatten(l) => l,
        }
    }

    pub fn kind_name(&self) -> &'static str {
        match self {
            LayerNode::Linear(_) => "linear",
            LayerNode::Conv2d(_) => "conv2d",
            LayerNode::MaxPool2x2(_) => "maxpool2x2",
            LayerNode::Dropout(_) => "dropout",
            LayerNode::BatchNorm(_) => "batchnorm",
            LayerNode::Activation(a) => a.kind().name(),
            LayerNode::Flatten(_) => "flatten",
        }
    }
}

/// Ordered stack of layers. Parameters are owned by the layers and exposed
/// through [`Network::params`].
#[derive(Debug, Clone, Default)]
pub struct Network {
    layers: Vec<LayerNode>,
}

fn tag_layer(err: Error, layer: usize) -> Error {
    match err {
        Error::BackwardBeforeForward { .. } => Error::BackwardBeforeForward { layer },
        other => other,
    }
}

impl Network {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, layer: LayerNode) -> &mut Self {
        self.layers.push(layer);
        self
    }

    pub fn layers(&self) -> &[LayerNode] {
        &self.layers
    }

    /// Multilayer perceptron over `widths = [input, hidden.., classes]` with
    /// an activation after every hidden linear layer.
    pub fn mlp(
        widths: &[usize],
        kind: ActivationKind,
        config: ParamConfig,
        rng: &mut Rng,
    ) -> Result<Self> {
        if widths.len() < 2 || widths.contains(&0) {
            return Err(invalid("mlp needs at least two positive widths"));
        }
        let mut net = Network::new();
        for (i, pair) in widths.windows(2).enumerate() {
            net.push(LayerNode::Linear(Linear::new(pair[0], pair[1], rng)?));
            if i + 2 < widths.len() {
                net.push(LayerNode::Activation(Activation::new(kind, config)?));
            }
        }
        Ok(net)
    }

    /// Desk-scale SmallNet: three `conv3x3 -> act -> maxpool -> dropout(0.2)`
    /// stages with 8, 16 and 32 filters, then `linear(64) -> act ->
    /// dropout(0.5) -> linear(classes)`. Height and width must be divisible
    /// by 8.
    pub fn smallnet_lite(
        input: [usize; 3],
        classes: usize,
        kind: ActivationKind,
        config: ParamConfig,
        rng: &mut Rng,
    ) -> Result<Self> {
        let [channels, height, width] = input;
        if height % 8 != 0 || width % 8 != 0 || height == 0 || width == 0 {
            return Err(invalid(
                "smallnet-lite needs height and width divisible by 8",
            ));
        }
        let mut net = Network::new();
        let mut c_in = channels;
        for c_out in [8, 16, 32] {
            net.push(LayerNode::Conv2d(Conv2d::new(c_in, c_out, rng)?))
                .push(LayerNode::Activation(Activation::new(kind, config)?))
                .push(LayerNode::MaxPool2x2(MaxPool2x2::new()))
                .push(LayerNode::Dropout(Dropout::new(
                    0.2,
                    Rng::new(rng.next_u64()),
                )?));
            c_in = c_out;
        }
        let flat = 32 * (height / 8) * (width / 8);
        net.push(LayerNode::Flatten(Flatten::default()))
            .push(LayerNode::Linear(Linear::new(flat, 64, rng)?))
            .push(LayerNode::Activation(Activation::new(kind, config)?))
            .push(LayerNode::Dropout(Dropout::new(
                0.5,
                Rng::new(rng.next_u64()),
            )?))
            .push(LayerNode::Linear(Linear::new(64, classes, rng)?));
        Ok(net)
    }

    pub fn forward(&mut self, x: &Tensor, mode: Mode) -> Result<Tensor> {
        let mut h = x.clone();
        for layer in &mut self.layers {
            h = layer.as_layer().forward(&h, mode)?;
        }
        Ok(h)
    }

    /// Backpropagates `dLoss/dOutput` and stores every parameter gradient.
    /// Returns the gradient w.r.t. the network input.
    pub fn backward(&mut self, upstream: &Tensor) -> Result<Tensor> {
        let mut g = upstream.clone();
        for (i, layer) in self.layers.iter_mut().enumerate().rev() {
            g = layer.as_layer().backward(&g).map_err(|e| tag_layer(e, i))?;
        }
        Ok(g)
    }

    pub fn params(&mut self) -> Vec<ParamView<'_>> {
        self.layers
            .iter_mut()
            .enumerate()
            .flat_map(|(i, layer)| layer.as_layer().params(i))
            .collect()
    }

    pub fn gradients(&mut self) -> Vec<NamedGradient> {
        self.params()
            .into_iter()
            .map(|p| NamedGradient {
                layer: p.layer,
                group: p.group,
                values: p.grad.to_vec(),
            })
            .collect()
    }

    pub fn num_params(&mut self) -> usize {
        self.params().iter().map(|p| p.value.len()).sum()
    }

    /// `(layer index, parameters)` for every PELU layer.
    pub fn pelu_layers(&self) -> impl Iterator<Item = (usize, &PeluParams)> {
        self.layers.iter().enumerate().filter_map(|(i, l)| match l {
            LayerNode::Activation(a) if a.kind() == ActivationKind::Pelu => Some((i, &a.pelu)),
            _ => None,
        })
    }

    pub fn pelu_layers_mut(&mut self) -> impl Iterator<Item = &mut PeluParams> {
        self.layers.iter_mut().filter_map(|l| match l {
            LayerNode::Activation(a) if a.kind() == ActivationKind::Pelu => Some(&mut a.pelu),
            _ => None,
        })
    }
}
