//! Panels, splits, windows, per-window re-normalization and synthetic data.

mod panel;
mod split;
pub mod synth;
mod window;

use alloc::string::String;
use core::fmt;

pub use panel::{Covariate, CovariateKind, SeriesPanel};
pub use split::{SplitMode, SplitSpec};
pub use synth::{synth_covariate_regression, synth_endogenous, EndogenousSpec, SyntheticPanel};
pub use window::{
    denormalize, make_windows, window_count, FutureMode, NormalizedWindow, RenormStats, SeriesWindow, Stats,
    WindowSpec, RENORM_EPS,
};

#[derive(Debug, Clone, PartialEq)]
pub enum DataError {
    LengthMismatch {
        column: String,
        expected: usize,
        found: usize,
    },
    NonMonotoneTimestamp {
        row: usize,
    },
    NonFinite {
        row: usize,
        column: String,
    },
    SplitTooShort {
        len: usize,
        needed: usize,
    },
    InvalidSplit(&'static str),
    InvalidWindow(&'static str),
    InvalidSynthetic(&'static str),
}

impl fmt::Display for DataError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DataError::LengthMismatch {
                column,
                expected,
                found,
            } => {
                write!(f, "column {column}: expected {expected} values, found {found}")
            }
            DataError::NonMonotoneTimestamp { row } => write!(f, "timestamp at row {row} is not strictly increasing"),
            DataError::NonFinite { row, column } => write!(f, "non-finite value in column {column} at row {row}"),
            DataError::SplitTooShort { len, needed } => {
                write!(f, "split of length {len} is shorter than history + horizon = {needed}")
            }
            DataError::InvalidSplit(m) | DataError::InvalidWindow(m) | DataError::InvalidSynthetic(m) => f.write_str(m),
        }
    }
}

impl core::error::Error for DataError {}
