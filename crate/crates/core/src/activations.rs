//! PELU and baseline activations with analytic input and parameter gradients.
//!
//! PELU is `f(h) = (a/b) h` for `h >= 0` and `a (exp(h/b) - 1)` for `h < 0`
//! with `a, b > 0`. The linear slope `a/b` is what keeps `f` differentiable at
//! zero. `a = b = 1` is exactly ELU.

use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use crate::error::{invalid, Error, Result};
use crate::tensor::Tensor;

/// Lower bound on every stored activation parameter after an update.
pub const PARAM_FLOOR: f64 = 0.1;

/// Exponents below this are clamped before `exp`; `exp(-60)` is below f64
/// resolution relative to 1.
const MIN_EXPONENT: f64 = -60.0;

/// Initial PReLU slope.
pub const PRELU_INIT_SLOPE: f64 = 0.25;

fn guarded_exp(x: f64) -> f64 {
    libm::exp(x.max(MIN_EXPONENT))
}

/// Which of `{a, 1/a} x {b, 1/b}` is stored and learned.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum ParamConfig {
    /// Store `(a, b)`.
    AB,
    /// Store `(a, 1/b)`.
    #[default]
    AInvB,
    /// Store `(1/a, b)`.
    InvAB,
    /// Store `(1/a, 1/b)`.
    InvAInvB,
}

impl ParamConfig {
    pub const ALL: [ParamConfig; 4] = [
        ParamConfig::AB,
        ParamConfig::AInvB,
        ParamConfig::InvAB,
        ParamConfig::InvAInvB,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ParamConfig::AB => "a_b",
            ParamConfig::AInvB => "a_invb",
            ParamConfig::InvAB => "inva_b",
            ParamConfig::InvAInvB => "inva_invb",
        }
    }

    fn a_reciprocal(self) -> bool {
        matches!(self, ParamConfig::InvAB | ParamConfig::InvAInvB)
    }

    fn b_reciprocal(self) -> bool {
        matches!(self, ParamConfig::AInvB | ParamConfig::InvAInvB)
    }
}

impl fmt::Display for ParamConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ParamConfig {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ParamConfig::ALL
            .into_iter()
            .find(|c| c.name() == s)
            .ok_or_else(|| invalid(alloc::format!("unknown parameter configuration `{s}`")))
    }
}

/// Per-layer PELU parameters as stored and learned, with their momentum
/// buffers.
#[derive(Debug, Clone, PartialEq)]
pub struct PeluParams {
    /// Stores `a` or `1/a` depending on `config`.
    pub p: f64,
    /// Stores `b` or `1/b` depending on `config`.
    pub q: f64,
    pub vp: f64,
    pub vq: f64,
    pub config: ParamConfig,
}

impl PeluParams {
    /// Parameters with effective `a = b = 1`, i.e. plain ELU.
    pub fn new(config: ParamConfig) -> Self {
        Self {
            p: 1.0,
            q: 1.0,
            vp: 0.0,
            vq: 0.0,
            config,
        }
    }

    pub fn from_effective(a: f64, b: f64, config: ParamConfig) -> Result<Self> {
        let p = if config.a_reciprocal() { 1.0 / a } else { a };
        let q = if config.b_reciprocal() { 1.0 / b } else { b };
        if !(p >= PARAM_FLOOR && q >= PARAM_FLOOR) || !p.is_finite() || !q.is_finite() {
            return Err(invalid(alloc::format!(
                "effective (a, b) = ({a}, {b}) stores below the {PARAM_FLOOR} floor under {config}"
            )));
        }
        Ok(Self {
            p,
            q,
            vp: 0.0,
            vq: 0.0,
            config,
        })
    }

    /// Effective `(a, b)` recovered from the stored values.
    pub fn effective(&self) -> (f64, f64) {
        let a = if self.config.a_reciprocal() {
            1.0 / self.p
        } else {
            self.p
        };
        let b = if self.config.b_reciprocal() {
            1.0 / self.q
        } else {
            self.q
        };
        (a, b)
    }

    /// Chain-rules `(dE/da, dE/db)` into gradients of the stored `(p, q)`.
    pub fn stored_gradients(&self, grad_a: f64, grad_b: f64) -> (f64, f64) {
        let gp = if self.config.a_reciprocal() {
            -grad_a / (self.p * self.p)
        } else {
            grad_a
        };
        let gq = if self.config.b_reciprocal() {
            -grad_b / (self.q * self.q)
        } else {
            grad_b
        };
        (gp, gq)
    }
}

/// Activation family selected for a layer.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ActivationKind {
    Pelu,
    Elu,
    Relu,
    LeakyRelu {
        slope: f64,
    },
    /// Leaky ReLU with a learned slope, initialised at 0.25.
    Prelu,
}

impl ActivationKind {
    pub fn name(&self) -> &'static str {
        match self {
            ActivationKind::Pelu => "pelu",
            ActivationKind::Elu => "elu",
            ActivationKind::Relu => "relu",
            ActivationKind::LeakyRelu { .. } => "lrelu",
            ActivationKind::Prelu => "prelu",
        }
    }
}

/// A fully parameterised scalar nonlinearity.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Nonlinearity {
    Pelu { a: f64, b: f64 },
    Elu,
    Relu,
    LeakyRelu { slope: f64 },
    Prelu { slope: f64 },
}

impl Nonlinearity {
    pub fn value(self, h: f64) -> f64 {
        match self {
            Nonlinearity::Pelu { a, b } => pelu(h, a, b),
            Nonlinearity::Elu => pelu(h, 1.0, 1.0),
            Nonlinearity::Relu => h.max(0.0),
            Nonlinearity::LeakyRelu { slope } | Nonlinearity::Prelu { slope } => {
                h.max(0.0) + slope * h.min(0.0)
            }
        }
    }

    /// `df/dh`. ReLU-family kinks at zero take the right-hand derivative.
    pub fn derivative(self, h: f64) -> f64 {
        match self {
            Nonlinearity::Pelu { a, b } => pelu_derivative(h, a, b),
            Nonlinearity::Elu => pelu_derivative(h, 1.0, 1.0),
            Nonlinearity::Relu => {
                if h >= 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Nonlinearity::LeakyRelu { slope } | Nonlinearity::Prelu { slope } => {
                if h >= 0.0 {
                    1.0
                } else {
                    slope
                }
            }
        }
    }
}

/// Scalar PELU. `h = 0` takes the linear branch.
pub fn pelu(h: f64, a: f64, b: f64) -> f64 {
    if h >= 0.0 {
        (a / b) * h
    } else {
        a * (guarded_exp(h / b) - 1.0)
    }
}

/// `df/dh`; both branches equal `a/b` at zero.
pub fn pelu_derivative(h: f64, a: f64, b: f64) -> f64 {
    if h >= 0.0 {
        a / b
    } else {
        (a / b) * guarded_exp(h / b)
    }
}

/// `df/da`.
pub fn pelu_grad_a(h: f64, _a: f64, b: f64) -> f64 {
    if h >= 0.0 {
        h / b
    } else {
        guarded_exp(h / b) - 1.0
    }
}

/// `df/db`. On the negative branch this is `-(a h / b^2) exp(h/b)`; the `h`
/// factor comes from differentiating the exponent.
pub fn pelu_grad_b(h: f64, a: f64, b: f64) -> f64 {
    let r = -a * h / (b * b);
    if h >= 0.0 {
        r
    } else {
        r * guarded_exp(h / b)
    }
}

fn check_positive(a: f64, b: f64) -> Result<()> {
    if a > 0.0 && b > 0.0 && a.is_finite() && b.is_finite() {
        Ok(())
    } else {
        Err(invalid(alloc::format!(
            "PELU needs a, b > 0, got a = {a}, b = {b}"
        )))
    }
}

fn same_shape(op: &'static str, x: &Tensor, y: &Tensor) -> Result<()> {
    if x.shape() != y.shape() {
        return Err(Error::ShapeMismatch {
            op,
            expected: x.shape().to_vec(),
            found: y.shape().to_vec(),
        });
    }
    Ok(())
}

pub fn pelu_forward(h: &Tensor, a: f64, b: f64) -> Result<Tensor> {
    check_positive(a, b)?;
    h.map(|x| pelu(x, a, b))
}

pub fn pelu_backward_input(h: &Tensor, a: f64, b: f64, upstream: &Tensor) -> Result<Tensor> {
    check_positive(a, b)?;
    same_shape("pelu_backward_input", h, upstream)?;
    let data: Vec<f64> = h
        .data()
        .iter()
        .zip(upstream.data())
        .map(|(&x, &g)| g * pelu_derivative(x, a, b))
        .collect();
    Tensor::new(h.shape().to_vec(), data)
}

/// `(dE/da, dE/db)` summed over every element `h_i`.
pub fn pelu_backward_params(h: &Tensor, a: f64, b: f64, upstream: &Tensor) -> Result<(f64, f64)> {
    check_positive(a, b)?;
    same_shape("pelu_backward_params", h, upstream)?;
    Ok(accumulate_param_grads(h.data(), upstream.data(), a, b))
}

pub(crate) fn accumulate_param_grads(h: &[f64], upstream: &[f64], a: f64, b: f64) -> (f64, f64) {
    h.iter()
        .zip(upstream)
        .fold((0.0, 0.0), |(ga, gb), (&x, &g)| {
            (ga + g * pelu_grad_a(x, a, b), gb + g * pelu_grad_b(x, a, b))
        })
}

pub fn baseline_forward(nl: Nonlinearity, h: &Tensor) -> Result<Tensor> {
    h.map(|x| nl.value(x))
}

/// Input gradient, plus the slope gradient `sum(upstream * min(h, 0))` for
/// PReLU.
pub fn baseline_backward(
    nl: Nonlinearity,
    h: &Tensor,
    upstream: &Tensor,
) -> Result<(Tensor, Option<f64>)> {
    same_shape("baseline_backward", h, upstream)?;
    let data: Vec<f64> = h
        .data()
        .iter()
        .zip(upstream.data())
        .map(|(&x, &g)| g * nl.derivative(x))
        .collect();
    let slope_grad = match nl {
        Nonlinearity::Prelu { .. } => Some(
            h.data()
                .iter()
                .zip(upstream.data())
                .map(|(&x, &g)| g * x.min(0.0))
                .sum(),
        ),
        _ => None,
    };
    Ok((Tensor::new(h.shape().to_vec(), data)?, slope_grad))
}
