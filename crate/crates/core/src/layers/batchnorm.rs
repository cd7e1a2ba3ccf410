use alloc::vec;
use alloc::vec::Vec;

use super::{expect_shape, not_ready, Layer, Mode, ParamGroup, ParamView};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const BN_EPSILON: f64 = 1e-5;
pub const BN_MOMENTUM: f64 = 0.1;

/// Batch normalization over `[n, features]` or, per channel, over
/// `[n, channels, h, w]`.
#[derive(Debug, Clone)]
pub struct BatchNorm {
    pub gamma: Tensor,
    pub beta: Tensor,
    pub running_mean: Vec<f64>,
    pub running_var: Vec<f64>,
    grad_gamma: Vec<f64>,
    grad_beta: Vec<f64>,
    vel_gamma: Vec<f64>,
    vel_beta: Vec<f64>,
    cache: Option<BnCache>,
}

#[derive(Debug, Clone)]
struct BnCache {
    shape: Vec<usize>,
    normalized: Vec<f64>,
    inv_std: Vec<f64>,
}

/// `(n, features, spatial)` for a supported input shape.
fn layout(shape: &[usize], features: usize) -> Result<(usize, usize)> {
    match *shape {
        [n, f] if f == features => Ok((n, 1)),
        [n, c, h, w] if c == features => Ok((n, h * w)),
        _ => Err(Error::ShapeMismatch {
            op: "batchnorm",
            expected: vec![0, features],
            found: shape.to_vec(),
        }),
    }
}

impl BatchNorm {
    pub fn new(features: usize) -> Self {
        Self {
            gamma: Tensor::full(&[features], 1.0),
            beta: Tensor::zeros(&[features]),
            running_mean: vec![0.0; features],
            running_var: vec![1.0; features],
            grad_gamma: vec![0.0; features],
            grad_beta: vec![0.0; features],
            vel_gamma: vec![0.0; features],
            vel_beta: vec![0.0; features],
            cache: None,
        }
    }

    pub fn features(&self) -> usize {
        self.gamma.len()
    }
}

/// Calls `f(feature, flat_index)` for every element.
fn for_each_index(n: usize, features: usize, spatial: usize, mut f: impl FnMut(usize, usize)) {
    for s in 0..n {
        for c in 0..features {
            let base = (s * features + c) * spatial;
            for i in base..base + spatial {
                f(c, i);
            }
        }
    }
}

impl Layer for BatchNorm {
    fn forward(&mut self, x: &Tensor, mode: Mode) -> Result<Tensor> {
        let features = self.features();
        let (n, spatial) = layout(x.shape(), features)?;
        let count = (n * spatial) as f64;
        let data = x.data();

        let (mean, var) = match mode {
            Mode::Train => {
                let mut mean = vec![0.0; features];
                for_each_index(n, features, spatial, |c, i| mean[c] += data[i]);
                mean.iter_mut().for_each(|m| *m /= count);
                let mut var = vec![0.0; features];
                for_each_index(n, features, spatial, |c, i| {
                    let d = data[i] - mean[c];
                    var[c] += d * d;
                });
                var.iter_mut().for_each(|v| *v /= count);
                let unbias = if count > 1.0 {
                    count / (count - 1.0)
                } else {
                    1.0
                };
                for c in 0..features {
                    self.running_mean[c] =
                        (1.0 - BN_MOMENTUM) * self.running_mean[c] + BN_MOMENTUM * mean[c];
                    self.running_var[c] =
                        (1.0 - BN_MOMENTUM) * self.running_var[c] + BN_MOMENTUM * var[c] * unbias;
                }
                (mean, var)
            }
            Mode::Eval => (self.running_mean.clone(), self.running_var.clone()),
        };

        let inv_std: Vec<f64> = var
            .iter()
            .map(|v| 1.0 / libm::sqrt(v + BN_EPSILON))
            .collect();
        let mut normalized = vec![0.0; data.len()];
        for_each_index(n, features, spatial, |c, i| {
            normalized[i] = (data[i] - mean[c]) * inv_std[c];
        });
        let (gamma, beta) = (self.gamma.data(), self.beta.data());
        let mut out = vec![0.0; data.len()];
        for_each_index(n, features, spatial, |c, i| {
            out[i] = gamma[c] * normalized[i] + beta[c];
        });
        self.cache = (mode == Mode::Train).then(|| BnCache {
            shape: x.shape().to_vec(),
            normalized,
            inv_std,
        });
        Tensor::new(x.shape().to_vec(), out)
    }

    fn backward(&mut self, upstream: &Tensor) -> Result<Tensor> {
        let cache = self.cache.as_ref().ok_or_else(not_ready)?;
        expect_shape("batchnorm backward", &cache.shape, upstream.shape())?;
        let features = self.features();
        let (n, spatial) = layout(&cache.shape, features)?;
        let count = (n * spatial) as f64;
        let dy = upstream.data();
        let xhat = &cache.normalized;

        self.grad_gamma.fill(0.0);
        self.grad_beta.fill(0.0);
        for_each_index(n, features, spatial, |c, i| {
            self.grad_gamma[c] += dy[i] * xhat[i];
            self.grad_beta[c] += dy[i];
        });
        // dx = inv_std / N * (N dxhat - sum(dxhat) - xhat * sum(dxhat * xhat))
        // with dxhat = gamma dy, so the sums are gamma * grad_beta and
        // gamma * grad_gamma.
        let gamma = self.gamma.data();
        let mut dx = vec![0.0; dy.len()];
        for_each_index(n, features, spatial, |c, i| {
            let dxhat = gamma[c] * dy[i];
            dx[i] = cache.inv_std[c] / count
                * (count * dxhat
                    - gamma[c] * self.grad_beta[c]
                    - xhat[i] * gamma[c] * self.grad_gamma[c]);
        });
        Tensor::new(cache.shape.clone(), dx)
    }

    fn params(&mut self, layer: usize) -> Vec<ParamView<'_>> {
        vec![
            ParamView {
                layer,
                group: ParamGroup::BatchNormGamma,
                value: self.gamma.data_mut(),
                grad: &mut self.grad_gamma,
                velocity: &mut self.vel_gamma,
            },
            ParamView {
                layer,
                group: ParamGroup::BatchNormBeta,
                value: self.beta.data_mut(),
                grad: &mut self.grad_beta,
                velocity: &mut self.vel_beta,
            },
        ]
    }
}
