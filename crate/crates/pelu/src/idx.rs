//! IDX containers (big-endian, unsigned-byte payloads).
//!
//! Layout: two zero bytes, a type byte (`0x08` = u8), a dimension count,
//! one big-endian `u32` per dimension, then the payload in row-major order.
//! Images use three dimensions (`0x00000803`, `[n, h, w]`) or four
//! (`0x00000804`, `[n, c, h, w]`); labels use one (`0x00000801`).

use std::fs;
use std::path::Path;

use pelu_core::data::Dataset;
use pelu_core::Tensor;
use thiserror::Error;

const TYPE_U8: u8 = 0x08;

#[derive(Debug, Error)]
pub enum IdxError {
    #[error("bad IDX magic number {0:#010x}")]
    BadMagic(u32),
    #[error("unsupported IDX element type {0:#04x}, only unsigned bytes are supported")]
    UnsupportedType(u8),
    #[error("truncated IDX data: need {expected} bytes, found {found}")]
    Truncated { expected: usize, found: usize },
    #[error("IDX data has {0} trailing bytes")]
    TrailingBytes(usize),
    #[error("image count {images} does not match label count {labels}")]
    CountMismatch { images: usize, labels: usize },
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// Raw unsigned-byte IDX tensor.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IdxArray {
    pub dims: Vec<usize>,
    pub data: Vec<u8>,
}

impl IdxArray {
    pub fn magic(&self) -> u32 {
        (TYPE_U8 as u32) << 8 | self.dims.len() as u32
    }
}

pub fn decode(bytes: &[u8]) -> Result<IdxArray, IdxError> {
    if bytes.len() < 4 {
        return Err(IdxError::Truncated {
            expected: 4,
            found: bytes.len(),
        });
    }
    let magic = u32::from_be_bytes([bytes[0], bytes[1], bytes[2], bytes[3]]);
    let ndims = bytes[3] as usize;
    if bytes[0] != 0 || bytes[1] != 0 || ndims == 0 {
        return Err(IdxError::BadMagic(magic));
    }
    if bytes[2] != TYPE_U8 {
        return Err(IdxError::UnsupportedType(bytes[2]));
    }
    let header = 4 + 4 * ndims;
    if bytes.len() < header {
        return Err(IdxError::Truncated {
            expected: header,
            found: bytes.len(),
        });
    }
    let dims: Vec<usize> = bytes[4..header]
        .chunks_exact(4)
        .map(|c| u32::from_be_bytes([c[0], c[1], c[2], c[3]]) as usize)
        .collect();
    let expected = header + dims.iter().product::<usize>();
    match bytes.len().cmp(&expected) {
        std::cmp::Ordering::Less => Err(IdxError::Truncated {
            expected,
            found: bytes.len(),
        }),
        std::cmp::Ordering::Greater => Err(IdxError::TrailingBytes(bytes.len() - expected)),
        std::cmp::Ordering::Equal => Ok(IdxArray {
            dims,
            data: bytes[header..].to_vec(),
        }),
    }
}

pub fn encode(array: &IdxArray) -> Vec<u8> {
    let mut out = Vec::with_capacity(4 + 4 * array.dims.len() + array.data.len());
    out.extend_from_slice(&array.magic().to_be_bytes());
    for &d in &array.dims {
        out.extend_from_slice(&(d as u32).to_be_bytes());
    }
    out.extend_from_slice(&array.data);
    out
}

pub fn read_idx(path: &Path) -> Result<IdxArray, IdxError> {
    let bytes = fs::read(path).map_err(|source| IdxError::Io {
        path: path.display().to_string(),
        source,
    })?;
    decode(&bytes)
}

pub fn write_idx(path: &Path, array: &IdxArray) -> Result<(), IdxError> {
    fs::write(path, encode(array)).map_err(|source| IdxError::Io {
        path: path.display().to_string(),
        source,
    })
}

/// Builds a dataset from an image file and a label file. Pixels are scaled
/// to `[0, 1]`; images come out as `[n, c, h, w]`.
pub fn dataset_from_arrays(images: &IdxArray, labels: &IdxArray) -> Result<Dataset, IdxError> {
    let shape = match *images.dims.as_slice() {
        [n, h, w] => vec![n, 1, h, w],
        [n, c, h, w] => vec![n, c, h, w],
        _ => return Err(IdxError::BadMagic(images.magic())),
    };
    if labels.dims.len() != 1 {
        return Err(IdxError::BadMagic(labels.magic()));
    }
    if shape[0] != labels.dims[0] {
        return Err(IdxError::CountMismatch {
            images: shape[0],
            labels: labels.dims[0],
        });
    }
    let pixels = images.data.iter().map(|&b| b as f64 / 255.0).collect();
    let inputs = Tensor::new(shape, pixels).map_err(|_| IdxError::Truncated {
        expected: images.dims.iter().product(),
        found: images.data.len(),
    })?;
    let classes: Vec<usize> = labels.data.iter().map(|&l| l as usize).collect();
    let num_classes = classes.iter().max().map_or(1, |m| m + 1);
    Ok(Dataset::new(inputs, classes, num_classes).expect("labels checked against their maximum"))
}

pub fn load_idx(images_path: &Path, labels_path: &Path) -> Result<Dataset, IdxError> {
    dataset_from_arrays(&read_idx(images_path)?, &read_idx(labels_path)?)
}
