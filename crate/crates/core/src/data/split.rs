use core::ops::Range;
use serde::{Deserialize, Serialize};

use super::DataError;

/// How far a window may reach back across the start of its split.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SplitMode {
    /// Every window, history included, lies inside its split.
    #[default]
    Strict,
    /// Only the horizon must lie inside the split; the history may read up to
    /// `L` points from the preceding split (the usual EPF/LTSF loader layout).
    BorrowLookback,
}

/// Contiguous, ordered train/validation/test index ranges.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train: Range<usize>,
    pub val: Range<usize>,
    pub test: Range<usize>,
}

impl SplitSpec {
    pub fn new(train: Range<usize>, val: Range<usize>, test: Range<usize>) -> Result<Self, DataError> {
        let ordered = train.start <= train.end
            && train.end <= val.start
            && val.start <= val.end
            && val.end <= test.start
            && test.start <= test.end;
        if !ordered {
            return Err(DataError::InvalidSplit(
                "ranges must be disjoint and ordered train < val < test",
            ));
        }
        Ok(SplitSpec { train, val, test })
    }

    /// `floor(train_frac·T)` train points, `floor(test_frac·T)` test points,
    /// the remainder for validation.
    pub fn from_fractions(total: usize, train_frac: f64, test_frac: f64) -> Result<Self, DataError> {
        if !(0.0..=1.0).contains(&train_frac) || !(0.0..=1.0).contains(&test_frac) || train_frac + test_frac > 1.0 {
            return Err(DataError::InvalidSplit(
                "fractions must lie in [0,1] and sum to at most 1",
            ));
        }
        let n_train = libm::floor(total as f64 * train_frac) as usize;
        let n_test = libm::floor(total as f64 * test_frac) as usize;
        let n_val = total - n_train - n_test;
        SplitSpec::new(0..n_train, n_train..n_train + n_val, n_train + n_val..total)
    }

    pub fn end(&self) -> usize {
        self.test.end
    }
}
