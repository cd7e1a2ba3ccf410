use alloc::vec;
use alloc::vec::Vec;

use super::{expect_rank, expect_shape, he_init, not_ready, Layer, Mode, ParamGroup, ParamView};
use crate::error::Result;
use crate::rng::Rng;
use crate::tensor::{gemm, gemm_nt, gemm_tn, Tensor};

/// Fully connected layer `y = x W + b` with `W: [in, out]`.
#[derive(Debug, Clone)]
pub struct Linear {
    pub weight: Tensor,
    pub bias: Tensor,
    grad_weight: Vec<f64>,
    grad_bias: Vec<f64>,
    vel_weight: Vec<f64>,
    vel_bias: Vec<f64>,
    input: Option<Tensor>,
}

impl Linear {
    pub fn new(inputs: usize, outputs: usize, rng: &mut Rng) -> Result<Self> {
        let weight = he_init(&[inputs, outputs], inputs, rng)?;
        Ok(Self::from_weights(weight, Tensor::zeros(&[outputs])))
    }

    pub fn from_weights(weight: Tensor, bias: Tensor) -> Self {
        let (nw, nb) = (weight.len(), bias.len());
        Self {
            weight,
            bias,
            grad_weight: vec![0.0; nw],
            grad_bias: vec![0.0; nb],
            vel_weight: vec![0.0; nw],
            vel_bias: vec![0.0; nb],
            input: None,
        }
    }

    fn dims(&self) -> (usize, usize) {
        (self.weight.shape()[0], self.weight.shape()[1])
    }
}

impl Layer for Linear {
    fn forward(&mut self, x: &Tensor, mode: Mode) -> Result<Tensor> {
        let (fan_in, fan_out) = self.dims();
        expect_rank("linear", x, 2)?;
        let n = x.shape()[0];
        expect_shape("linear", &[n, fan_in], x.shape())?;
        let mut out = Vec::with_capacity(n * fan_out);
        for _ in 0..n {
            out.extend_from_slice(self.bias.data());
        }
        gemm(x.data(), self.weight.data(), &mut out, n, fan_in, fan_out);
        self.input = (mode == Mode::Train).then(|| x.clone());
        Tensor::new(vec![n, fan_out], out)
    }

    fn backward(&mut self, upstream: &Tensor) -> Result<Tensor> {
        let x = self.input.as_ref().ok_or_else(not_ready)?;
        let (fan_in, fan_out) = self.dims();
        let n = x.shape()[0];
        expect_shape("linear backward", &[n, fan_out], upstream.shape())?;
        let delta = upstream.data();

        self.grad_weight.fill(0.0);
        gemm_tn(x.data(), delta, &mut self.grad_weight, fan_in, n, fan_out);
        self.grad_bias.fill(0.0);
        for row in delta.chunks_exact(fan_out) {
            for (g, &d) in self.grad_bias.iter_mut().zip(row) {
                *g += d;
            }
        }
        let mut dx = vec![0.0; n * fan_in];
        gemm_nt(delta, self.weight.data(), &mut dx, n, fan_out, fan_in);
        Tensor::new(vec![n, fan_in], dx)
    }

    fn params(&mut self, layer: usize) -> Vec<ParamView<'_>> {
        vec![
            ParamView {
                layer,
                group: ParamGroup::LinearWeight,
                value: self.weight.data_mut(),
                grad: &mut self.grad_weight,
                velocity: &mut self.vel_weight,
            },
            ParamView {
                layer,
                group: ParamGroup::LinearBias,
                value: self.bias.data_mut(),
                grad: &mut self.grad_bias,
                velocity: &mut self.vel_bias,
            },
        ]
    }
}
