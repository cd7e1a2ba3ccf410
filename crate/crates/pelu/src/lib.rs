//! Training, gradient checking and analysis front-end for `pelu-core`.
//!
//! This crate owns everything that touches the outside world: the IDX image
//! format, JSON run configurations, CSV outputs and the `pelu` command line.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analyze;
pub mod cli;
pub mod config;
mod csv_out;
mod error;
pub mod gradcheck;
pub mod idx;
pub mod runner;
pub mod sweep;

pub use crate::error::{CliError, EXIT_NUMERICAL, EXIT_USAGE};
