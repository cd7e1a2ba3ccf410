use alloc::vec;
use alloc::vec::Vec;

use super::{expect_rank, expect_shape, he_init, not_ready, Layer, Mode, ParamGroup, ParamView};
use crate::error::Result;
use crate::rng::Rng;
use crate::tensor::{gemm, gemm_nt, gemm_tn, Tensor};

const K: usize = 3;

/// 3x3 convolution, stride 1, zero padding 1, computed with im2col.
///
/// Input `[n, c_in, h, w]`, weight `[c_out, c_in, 3, 3]`, output
/// `[n, c_out, h, w]`.
#[derive(Debug, Clone)]
pub struct Conv2d {
    pub weight: Tensor,
    pub bias: Tensor,
    grad_weight: Vec<f64>,
    grad_bias: Vec<f64>,
    vel_weight: Vec<f64>,
    vel_bias: Vec<f64>,
    cache: Option<ConvCache>,
}

#[derive(Debug, Clone)]
struct ConvCache {
    input_shape: Vec<usize>,
    /// One `[c_in * 9, h * w]` column matrix per sample.
    columns: Vec<Vec<f64>>,
}

fn im2col(image: &[f64], channels: usize, height: usize, width: usize) -> Vec<f64> {
    let hw = height * width;
    let mut cols = vec![0.0; channels * K * K * hw];
    for c in 0..channels {
        let plane = &image[c * hw..(c + 1) * hw];
        for ky in 0..K {
            for kx in 0..K {
                let row = &mut cols[((c * K + ky) * K + kx) * hw..][..hw];
                for y in 0..height {
                    let sy = y + ky;
                    if sy < 1 || sy > height {
                        continue;
                    }
                    let src = &plane[(sy - 1) * width..sy * width];
                    for x in 0..width {
                        let sx = x + kx;
                        if sx >= 1 && sx <= width {
                            row[y * width + x] = src[sx - 1];
                        }
                    }
                }
            }
        }
    }
    cols
}

fn col2im(cols: &[f64], channels: usize, height: usize, width: usize, image: &mut [f64]) {
    let hw = height * width;
    for c in 0..channels {
        let plane = &mut image[c * hw..(c + 1) * hw];
        for ky in 0..K {
            for kx in 0..K {
                let row = &cols[((c * K + ky) * K + kx) * hw..][..hw];
                for y in 0..height {
                    let sy = y + ky;
                    if sy < 1 || sy > height {
                        continue;
                    }
                    for x in 0..width {
                        let sx = x + kx;
                        if sx >= 1 && sx <= width {
                            plane[(sy - 1) * width + sx - 1] += row[y * width + x];
                        }
                    }
                }
            }
        }
    }
}

impl Conv2d {
    pub fn new(in_channels: usize, out_channels: usize, rng: &mut Rng) -> Result<Self> {
        let fan_in = in_channels * K * K;
        let weight = he_init(&[out_channels, in_channels, K, K], fan_in, rng)?;
        Ok(Self::from_weights(weight, Tensor::zeros(&[out_channels])))
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
            cache: None,
        }
    }

    pub fn in_channels(&self) -> usize {
        self.weight.shape()[1]
    }

    pub fn out_channels(&self) -> usize {
        self.weight.shape()[0]
    }
}

impl Layer for Conv2d {
    fn forward(&mut self, x: &Tensor, mode: Mode) -> Result<Tensor> {
        expect_rank("conv2d", x, 4)?;
        let &[n, c, h, w] = x.shape() else {
            unreachable!()
        };
        expect_shape("conv2d", &[n, self.in_channels(), h, w], x.shape())?;
        let oc = self.out_channels();
        let hw = h * w;
        let patch = c * K * K;
        let mut out = vec![0.0; n * oc * hw];
        let mut columns = Vec::with_capacity(if mode == Mode::Train { n } else { 0 });
        for (s, image) in x.data().chunks_exact(c * hw).enumerate() {
            let cols = im2col(image, c, h, w);
            let dst = &mut out[s * oc * hw..(s + 1) * oc * hw];
            for (o, plane) in dst.chunks_exact_mut(hw).enumerate() {
                plane.fill(self.bias.data()[o]);
            }
            gemm(self.weight.data(), &cols, dst, oc, patch, hw);
            if mode == Mode::Train {
                columns.push(cols);
            }
        }
        self.cache = (mode == Mode::Train).then(|| ConvCache {
            input_shape: x.shape().to_vec(),
            columns,
        });
        Tensor::new(vec![n, oc, h, w], out)
    }

    fn backward(&mut self, upstream: &Tensor) -> Result<Tensor> {
        let cache = self.cache.as_ref().ok_or_else(not_ready)?;
        let &[n, c, h, w] = cache.input_shape.as_slice() else {
            unreachable!()
        };
        let oc = self.out_channels();
        expect_shape("conv2d backward", &[n, oc, h, w], upstream.shape())?;
        let hw = h * w;
        let patch = c * K * K;

        self.grad_weight.fill(0.0);
        self.grad_bias.fill(0.0);
        let mut dx = vec![0.0; n * c * hw];
        let mut dcols = vec![0.0; patch * hw];
        for (s, delta) in upstream.data().chunks_exact(oc * hw).enumerate() {
            gemm_nt(
                delta,
                &cache.columns[s],
                &mut self.grad_weight,
                oc,
                hw,
                patch,
            );
            for (o, plane) in delta.chunks_exact(hw).enumerate() {
                self.grad_bias[o] += plane.iter().sum::<f64>();
            }
            dcols.fill(0.0);
            gemm_tn(self.weight.data(), delta, &mut dcols, patch, oc, hw);
            col2im(&dcols, c, h, w, &mut dx[s * c * hw..(s + 1) * c * hw]);
        }
        Tensor::new(vec![n, c, h, w], dx)
    }

    fn params(&mut self, layer: usize) -> Vec<ParamView<'_>> {
        vec![
            ParamView {
                layer,
                group: ParamGroup::ConvWeight,
                value: self.weight.data_mut(),
                grad: &mut self.grad_weight,
                velocity: &mut self.vel_weight,
            },
            ParamView {
                layer,
                group: ParamGroup::ConvBias,
                value: self.bias.data_mut(),
                grad: &mut self.grad_bias,
                velocity: &mut self.vel_bias,
            },
        ]
    }
}

/// Direct (six nested loops) 3x3, stride 1, pad 1 convolution.
pub fn direct_conv3x3(x: &Tensor, weight: &Tensor, bias: &Tensor) -> Result<Tensor> {
    let &[n, c, h, w] = x.shape() else {
        expect_rank("direct_conv3x3", x, 4)?;
        unreachable!()
    };
    let oc = weight.shape()[0];
    expect_shape("direct_conv3x3", &[oc, c, K, K], weight.shape())?;
    let (xd, wd) = (x.data(), weight.data());
    let mut out = vec![0.0; n * oc * h * w];
    for s in 0..n {
        for o in 0..oc {
            for y in 0..h {
                for xx in 0..w {
                    let mut acc = bias.data()[o];
                    for ci in 0..c {
                        for ky in 0..K {
                            for kx in 0..K {
                                let (sy, sx) = (y + ky, xx + kx);
                                if sy < 1 || sx < 1 || sy > h || sx > w {
                                    continue;
                                }
                                acc += wd[((o * c + ci) * K + ky) * K + kx]
                                    * xd[((s * c + ci) * h + sy - 1) * w + sx - 1];
                            }
                        }
                    }
                    out[((s * oc + o) * h + y) * w + xx] = acc;
                }
            }
        }
    }
    Tensor::new(vec![n, oc, h, w], out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matches_direct_convolution() {
        let mut rng = Rng::new(17);
        let mut conv = Conv2d::new(3, 4, &mut rng).unwrap();
        conv.bias = Tensor::randn(&[4], 1.0, &mut rng);
        let x = Tensor::randn(&[2, 3, 5, 6], 1.0, &mut rng);
        let fast = conv.forward(&x, Mode::Eval).unwrap();
        let slow = direct_conv3x3(&x, &conv.weight, &conv.bias).unwrap();
        assert_eq!(fast.shape(), slow.shape());
        for (a, b) in fast.data().iter().zip(slow.data()) {
            assert!((a - b).abs() <= 1e-12);
        }
    }

    #[test]
    fn col2im_is_adjoint_of_im2col() {
        // <im2col(x), y> == <x, col2im(y)>
        let mut rng = Rng::new(8);
        let (c, h, w) = (2, 4, 3);
        let x = Tensor::randn(&[c * h * w], 1.0, &mut rng);
        let y = Tensor::randn(&[c * 9 * h * w], 1.0, &mut rng);
        let lhs: f64 = im2col(x.data(), c, h, w)
            .iter()
            .zip(y.data())
            .map(|(a, b)| a * b)
            .sum();
        let mut back = vec![0.0; c * h * w];
        col2im(y.data(), c, h, w, &mut back);
        let rhs: f64 = back.iter().zip(x.data()).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() < 1e-10);
    }

    #[test]
    fn rejects_wrong_channel_count() {
        let mut conv = Conv2d::new(3, 4, &mut Rng::new(0)).unwrap();
        assert!(conv
            .forward(&Tensor::zeros(&[1, 2, 4, 4]), Mode::Train)
            .is_err());
        assert!(conv
            .forward(&Tensor::zeros(&[1, 3, 4]), Mode::Train)
            .is_err());
    }
}
