use alloc::vec;
use alloc::vec::Vec;

use super::{expect_rank, expect_shape, not_ready, Layer, Mode};
use crate::error::{invalid, Result};
use crate::tensor::Tensor;

/// 2x2 max pooling with stride 2. Odd trailing rows and columns are dropped.
/// Ties go to the first maximum in row-major window order.
#[derive(Debug, Clone, Default)]
pub struct MaxPool2x2 {
    cache: Option<PoolCache>,
}

#[derive(Debug, Clone)]
struct PoolCache {
    input_shape: Vec<usize>,
    argmax: Vec<usize>,
}

impl MaxPool2x2 {
    pub fn new() -> Self {
        Self::default()
    }
}

impl Layer for MaxPool2x2 {
    fn forward(&mut self, x: &Tensor, mode: Mode) -> Result<Tensor> {
        expect_rank("maxpool", x, 4)?;
        let &[n, c, h, w] = x.shape() else {
            unreachable!()
        };
        let (oh, ow) = (h / 2, w / 2);
        if oh == 0 || ow == 0 {
            return Err(invalid("maxpool: spatial extents must be at least 2"));
        }
        let data = x.data();
        let mut out = Vec::with_capacity(n * c * oh * ow);
        let mut argmax = Vec::with_capacity(n * c * oh * ow);
        for plane in 0..n * c {
            let base = plane * h * w;
            for y in 0..oh {
                for xx in 0..ow {
                    let mut best = base + 2 * y * w + 2 * xx;
                    for (dy, dx) in [(0, 1), (1, 0), (1, 1)] {
                        let idx = base + (2 * y + dy) * w + 2 * xx + dx;
                        if data[idx] > data[best] {
                            best = idx;
                        }
                    }
                    out.push(data[best]);
                    argmax.push(best);
                }
            }
        }
        self.cache = (mode == Mode::Train).then(|| PoolCache {
            input_shape: x.shape().to_vec(),
            argmax,
        });
        Tensor::new(vec![n, c, oh, ow], out)
    }

    fn backward(&mut self, upstream: &Tensor) -> Result<Tensor> {
        let cache = self.cache.as_ref().ok_or_else(not_ready)?;
        let &[n, c, h, w] = cache.input_shape.as_slice() else {
            unreachable!()
        };
        expect_shape("maxpool backward", &[n, c, h / 2, w / 2], upstream.shape())?;
        let mut dx = vec![0.0; n * c * h * w];
        for (&src, &g) in cache.argmax.iter().zip(upstream.data()) {
            dx[src] += g;
        }
        Tensor::new(cache.input_shape.clone(), dx)
    }
}
