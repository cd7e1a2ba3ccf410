use alloc::vec;
use alloc::vec::Vec;

use super::{expect_shape, not_ready, Layer, Mode, ParamGroup, ParamView};
use crate::activations::{
    accumulate_param_grads, ActivationKind, Nonlinearity, ParamConfig, PeluParams, PRELU_INIT_SLOPE,
};
use crate::error::{invalid, Result};
use crate::tensor::Tensor;

/// Elementwise activation. PELU layers carry one `(a, b)` pair for the whole
/// layer; PReLU layers carry one learned slope.
#[derive(Debug, Clone)]
pub struct Activation {
    kind: ActivationKind,
    pub pelu: PeluParams,
    pub prelu_slope: f64,
    prelu_velocity: f64,
    grad_p: f64,
    grad_q: f64,
    grad_slope: f64,
    input: Option<Tensor>,
}

impl Activation {
    pub fn new(kind: ActivationKind, config: ParamConfig) -> Result<Self> {
        if let ActivationKind::LeakyRelu { slope } = kind {
            if !(slope > 0.0) {
                return Err(invalid(alloc::format!(
                    "leaky ReLU slope must be positive, got {slope}"
                )));
            }
        }
        Ok(Self {
            kind,
            pelu: PeluParams::new(config),
            prelu_slope: PRELU_INIT_SLOPE,
            prelu_velocity: 0.0,
            grad_p: 0.0,
            grad_q: 0.0,
            grad_slope: 0.0,
            input: None,
        })
    }

    pub fn kind(&self) -> ActivationKind {
        self.kind
    }

    /// The scalar function this layer currently applies.
    pub fn nonlinearity(&self) -> Nonlinearity {
        match self.kind {
            ActivationKind::Pelu => {
                let (a, b) = self.pelu.effective();
                Nonlinearity::Pelu { a, b }
            }
            ActivationKind::Elu => Nonlinearity::Elu,
            ActivationKind::Relu => Nonlinearity::Relu,
            ActivationKind::LeakyRelu { slope } => Nonlinearity::LeakyRelu { slope },
            ActivationKind::Prelu => Nonlinearity::Prelu {
                slope: self.prelu_slope,
            },
        }
    }
}

impl Layer for Activation {
    fn forward(&mut self, x: &Tensor, mode: Mode) -> Result<Tensor> {
        let nl = self.nonlinearity();
        let y = x.map(|h| nl.value(h))?;
        self.input = (mode == Mode::Train).then(|| x.clone());
        Ok(y)
    }

    fn backward(&mut self, upstream: &Tensor) -> Result<Tensor> {
        let h = self.input.as_ref().ok_or_else(not_ready)?;
        expect_shape("activation backward", h.shape(), upstream.shape())?;
        let nl = self.nonlinearity();
        let dx: Vec<f64> = h
            .data()
            .iter()
            .zip(upstream.data())
            .map(|(&x, &g)| g * nl.derivative(x))
            .collect();
        match nl {
            Nonlinearity::Pelu { a, b } => {
                let (ga, gb) = accumulate_param_grads(h.data(), upstream.data(), a, b);
                (self.grad_p, self.grad_q) = self.pelu.stored_gradients(ga, gb);
            }
            Nonlinearity::Prelu { .. } => {
                self.grad_slope = h
                    .data()
                    .iter()
                    .zip(upstream.data())
                    .map(|(&x, &g)| g * x.min(0.0))
                    .sum();
            }
            _ => {}
        }
        Tensor::new(h.shape().to_vec(), dx)
    }

    fn params(&mut self, layer: usize) -> Vec<ParamView<'_>> {
        match self.kind {
            ActivationKind::Pelu => vec![
                ParamView {
                    layer,
                    group: ParamGroup::PeluP,
                    value: core::slice::from_mut(&mut self.pelu.p),
                    grad: core::slice::from_mut(&mut self.grad_p),
                    velocity: core::slice::from_mut(&mut self.pelu.vp),
                },
                ParamView {
                    layer,
                    group: ParamGroup::PeluQ,
                    value: core::slice::from_mut(&mut self.pelu.q),
                    grad: core::slice::from_mut(&mut self.grad_q),
                    velocity: core::slice::from_mut(&mut self.pelu.vq),
                },
            ],
            ActivationKind::Prelu => vec![ParamView {
                layer,
                group: ParamGroup::PreluSlope,
                value: core::slice::from_mut(&mut self.prelu_slope),
                grad: core::slice::from_mut(&mut self.grad_slope),
                velocity: core::slice::from_mut(&mut self.prelu_velocity),
            }],
            _ => Vec::new(),
        }
    }
}
