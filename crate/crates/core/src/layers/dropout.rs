use alloc::vec::Vec;

use super::{expect_shape, not_ready, Layer, Mode};
use crate::error::{invalid, Result};
use crate::rng::Rng;
use crate::tensor::Tensor;

/// Inverted dropout: kept units are scaled by `1 / (1 - rate)` at train time,
/// so eval mode is the identity.
#[derive(Debug, Clone)]
pub struct Dropout {
    rate: f64,
    rng: Rng,
    mask: Option<(Vec<usize>, Vec<f64>)>,
}

impl Dropout {
    pub fn new(rate: f64, rng: Rng) -> Result<Self> {
        if !(0.0..1.0).contains(&rate) {
            return Err(invalid(alloc::format!("dropout rate {rate} not in [0, 1)")));
        }
        Ok(Self {
            rate,
            rng,
            mask: None,
        })
    }

    pub fn rate(&self) -> f64 {
        self.rate
    }
}

impl Layer for Dropout {
    fn forward(&mut self, x: &Tensor, mode: Mode) -> Result<Tensor> {
        if mode == Mode::Eval {
            self.mask = None;
            return Ok(x.clone());
        }
        let keep = 1.0 - self.rate;
        let mask: Vec<f64> = (0..x.len())
            .map(|_| {
                if self.rng.bernoulli(keep) {
                    1.0 / keep
                } else {
                    0.0
                }
            })
            .collect();
        let y = x.data().iter().zip(&mask).map(|(v, m)| v * m).collect();
        self.mask = Some((x.shape().to_vec(), mask));
        Tensor::new(x.shape().to_vec(), y)
    }

    fn backward(&mut self, upstream: &Tensor) -> Result<Tensor> {
        let (shape, mask) = self.mask.as_ref().ok_or_else(not_ready)?;
        expect_shape("dropout backward", shape, upstream.shape())?;
        let dx = upstream
            .data()
            .iter()
            .zip(mask)
            .map(|(g, m)| g * m)
            .collect();
        Tensor::new(shape.clone(), dx)
    }
}
