#![no_std]
// Negated comparisons are how NaN gets rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

//! Numerical core for networks built around the Parametric Exponential Linear
//! Unit (PELU).
//!
//! Everything here is pure computation over [`Tensor`] values and only needs
//! `alloc`: the activation math and its parameter gradients, a small layer
//! zoo with hand-written backward passes, momentum SGD with the clamped update
//! for activation parameters, the scalar chain-network analysis of vanishing
//! gradients, and seeded synthetic data. File formats, configuration and the
//! command line live in the `pelu` crate.

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod activations;
pub mod analysis;
pub mod data;
mod error;
pub mod gradcheck;
pub mod layers;
pub mod optim;
mod rng;
pub mod tensor;

pub use crate::activations::{ActivationKind, Nonlinearity, ParamConfig, PeluParams};
pub use crate::error::{Error, Result};
pub use crate::layers::{Mode, Network};
pub use crate::optim::{Sgd, SgdConfig};
pub use crate::rng::Rng;
pub use crate::tensor::Tensor;
