use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    ShapeMismatch {
        op: &'static str,
        expected: Vec<usize>,
        found: Vec<usize>,
    },
    /// An operation produced NaN or an infinity.
    NonFinite {
        op: &'static str,
    },
    EmptyTensor {
        op: &'static str,
    },
    AxisOutOfRange {
        axis: usize,
        rank: usize,
    },
    InvalidArgument(String),
    LabelOutOfRange {
        label: usize,
        num_classes: usize,
    },
    BackwardBeforeForward {
        layer: usize,
    },
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::ShapeMismatch {
                op,
                expected,
                found,
            } => {
                write!(
                    f,
                    "{op}: shape mismatch, expected {expected:?} but found {found:?}"
                )
            }
            Error::NonFinite { op } => write!(f, "{op}: produced a non-finite value"),
            Error::EmptyTensor { op } => write!(f, "{op}: empty tensor"),
            Error::AxisOutOfRange { axis, rank } => {
                write!(f, "axis {axis} out of range for rank {rank}")
            }
            Error::InvalidArgument(msg) => write!(f, "invalid argument: {msg}"),
            Error::LabelOutOfRange { label, num_classes } => {
                write!(f, "label {label} out of range for {num_classes} classes")
            }
            Error::BackwardBeforeForward { layer } => {
                write!(
                    f,
                    "layer {layer}: backward called without a train-mode forward"
                )
            }
        }
    }
}

impl core::error::Error for Error {}

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}
