//! In-memory datasets, seeded synthetic blobs and minibatch iteration.

use alloc::vec::Vec;
use core::f64::consts::TAU;

use crate::error::{invalid, Error, Result};
use crate::rng::Rng;
use crate::tensor::Tensor;

/// Radius of the circle the blob centers sit on.
pub const BLOB_RADIUS: f64 = 3.0;

/// Inputs `[n, ...]` with one class label per sample.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub inputs: Tensor,
    pub labels: Vec<usize>,
    pub num_classes: usize,
}

impl Dataset {
    pub fn new(inputs: Tensor, labels: Vec<usize>, num_classes: usize) -> Result<Self> {
        if inputs.shape()[0] != labels.len() {
            return Err(Error::ShapeMismatch {
                op: "Dataset::new",
                expected: alloc::vec![inputs.shape()[0]],
                found: alloc::vec![labels.len()],
            });
        }
        if let Some(&label) = labels.iter().find(|&&l| l >= num_classes) {
            return Err(Error::LabelOutOfRange { label, num_classes });
        }
        Ok(Self {
            inputs,
            labels,
            num_classes,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Shape of one sample.
    pub fn sample_shape(&self) -> &[usize] {
        &self.inputs.shape()[1..]
    }

    fn sample_len(&self) -> usize {
        self.sample_shape().iter().product()
    }

    pub fn sample(&self, i: usize) -> &[f64] {
        let n = self.sample_len();
        &self.inputs.data()[i * n..(i + 1) * n]
    }

    /// Stacks the given samples into a batch.
    pub fn gather(&self, indices: &[usize]) -> Result<(Tensor, Vec<usize>)> {
        let mut data = Vec::with_capacity(indices.len() * self.sample_len());
        let mut labels = Vec::with_capacity(indices.len());
        for &i in indices {
            if i >= self.len() {
                return Err(invalid(alloc::format!("sample {i} out of range")));
            }
            data.extend_from_slice(self.sample(i));
            labels.push(self.labels[i]);
        }
        let mut shape = alloc::vec![indices.len()];
        shape.extend_from_slice(self.sample_shape());
        Ok((Tensor::new(shape, data)?, labels))
    }
}

/// Per-position mean over all samples, shaped like one sample.
pub fn pixel_mean(ds: &Dataset) -> Result<Tensor> {
    if ds.is_empty() {
        return Err(Error::EmptyTensor { op: "pixel_mean" });
    }
    let mut mean = alloc::vec![0.0; ds.sample_len()];
    for i in 0..ds.len() {
        for (m, &v) in mean.iter_mut().zip(ds.sample(i)) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= ds.len() as f64);
    Tensor::new(ds.sample_shape().to_vec(), mean)
}

/// Subtracts a per-position mean (usually computed on the training split)
/// from every sample.
pub fn subtract_mean(ds: &mut Dataset, mean: &Tensor) -> Result<()> {
    if mean.shape() != ds.sample_shape() {
        return Err(Error::ShapeMismatch {
            op: "subtract_mean",
            expected: ds.sample_shape().to_vec(),
            found: mean.shape().to_vec(),
        });
    }
    let n = mean.len();
    for chunk in ds.inputs.data_mut().chunks_exact_mut(n) {
        for (v, m) in chunk.iter_mut().zip(mean.data()) {
            *v -= m;
        }
    }
    Ok(())
}

/// Gaussian clusters with standard deviation `spread` around centers evenly
/// spaced on a circle of radius 3 in the first two coordinates. Samples are
/// interleaved by class.
pub fn gen_blobs(
    seed: u64,
    n_per_class: usize,
    num_classes: usize,
    dim: usize,
    spread: f64,
) -> Result<Dataset> {
    if n_per_class == 0 || num_classes == 0 || dim == 0 {
        return Err(invalid("blob counts and dimension must be positive"));
    }
    if !(spread >= 0.0 && spread.is_finite()) {
        return Err(invalid(alloc::format!(
            "spread must be non-negative, got {spread}"
        )));
    }
    let mut rng = Rng::new(seed);
    let centers: Vec<Vec<f64>> = (0..num_classes)
        .map(|c| {
            let angle = TAU * c as f64 / num_classes as f64;
            let mut center = alloc::vec![0.0; dim];
            center[0] = BLOB_RADIUS * libm::cos(angle);
            if dim > 1 {
                center[1] = BLOB_RADIUS * libm::sin(angle);
            }
            center
        })
        .collect();
    let n = n_per_class * num_classes;
    let mut data = Vec::with_capacity(n * dim);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let class = i % num_classes;
        data.extend(centers[class].iter().map(|&c| c + spread * rng.normal()));
        labels.push(class);
    }
    Dataset::new(Tensor::new(alloc::vec![n, dim], data)?, labels, num_classes)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Augment {
    #[default]
    None,
    /// Mirror the width axis of `[c, h, w]` samples with probability 1/2.
    HFlip,
}

/// Mirrors one `[c, h, w]` image along its width axis, in place.
pub fn hflip(image: &mut [f64], width: usize) {
    for row in image.chunks_exact_mut(width) {
        row.reverse();
    }
}

/// One epoch of shuffled minibatches. The final batch may be short.
pub struct Batches<'a> {
    ds: &'a Dataset,
    order: Vec<usize>,
    pos: usize,
    batch_size: usize,
    augment: Augment,
    rng: &'a mut Rng,
}

/// Shuffles with `rng` and yields every sample exactly once.
pub fn batches<'a>(
    ds: &'a Dataset,
    batch_size: usize,
    rng: &'a mut Rng,
    augment: Augment,
) -> Result<Batches<'a>> {
    if batch_size == 0 {
        return Err(invalid("batch size must be at least 1"));
    }
    let order = rng.permutation(ds.len());
    Ok(Batches {
        ds,
        order,
        pos: 0,
        batch_size,
        augment,
        rng,
    })
}

impl Iterator for Batches<'_> {
    type Item = (Tensor, Vec<usize>);

    fn next(&mut self) -> Option<Self::Item> {
        if self.pos >= self.order.len() {
            return None;
        }
        let end = (self.pos + self.batch_size).min(self.order.len());
        let (mut x, labels) = self
            .ds
            .gather(&self.order[self.pos..end])
            .expect("indices come from a permutation of the dataset");
        self.pos = end;
        if self.augment == Augment::HFlip && x.rank() == 4 {
            let sample = self.ds.sample_len();
            let width = x.shape()[3];
            for image in x.data_mut().chunks_exact_mut(sample) {
                if self.rng.bernoulli(0.5) {
                    hflip(image, width);
                }
            }
        }
        Some((x, labels))
    }
}
