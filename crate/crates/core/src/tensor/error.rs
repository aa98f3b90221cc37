use alloc::vec::Vec;
use core::fmt;

/// Failure raised by a tensor primitive or by the differentiation machinery.
#[derive(Debug, Clone, PartialEq)]
pub enum TensorError {
    ShapeMismatch {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },
    EmptyAxis {
        op: &'static str,
        shape: Vec<usize>,
    },
    InvalidAxis {
        op: &'static str,
        axis: usize,
        rank: usize,
    },
    InvalidShape {
        op: &'static str,
        shape: Vec<usize>,
        reason: &'static str,
    },
    NonScalarLoss {
        shape: Vec<usize>,
    },
    NonFinite {
        param: usize,
        index: usize,
    },
}

impl fmt::Display for TensorError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TensorError::ShapeMismatch { op, lhs, rhs } => {
                write!(f, "{op}: shape mismatch between {lhs:?} and {rhs:?}")
            }
            TensorError::EmptyAxis { op, shape } => {
                write!(f, "{op}: reduction axis has extent 0 in shape {shape:?}")
            }
            TensorError::InvalidAxis { op, axis, rank } => {
                write!(f, "{op}: axis {axis} out of range for rank {rank}")
            }
            TensorError::InvalidShape { op, shape, reason } => {
                write!(f, "{op}: invalid shape {shape:?}: {reason}")
            }
            TensorError::NonScalarLoss { shape } => {
                write!(f, "backward: loss must be a scalar, got shape {shape:?}")
            }
            TensorError::NonFinite { param, index } => {
                write!(
                    f,
                    "non-finite objective while perturbing parameter {param} element {index}"
                )
            }
        }
    }
}

impl core::error::Error for TensorError {}
