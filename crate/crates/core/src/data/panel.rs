use alloc::string::String;
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use super::DataError;

/// Whether a covariate's horizon values are available at forecast time.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CovariateKind {
    KnownFuture,
    PastOnly,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Covariate {
    pub name: String,
    pub kind: CovariateKind,
    pub values: Vec<f64>,
}

/// One endogenous target series plus `C` aligned exogenous series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesPanel {
    timestamps: Vec<i64>,
    target: Vec<f64>,
    covariates: Vec<Covariate>,
}

impl SeriesPanel {
    /// Validates column lengths, timestamp order and finiteness.
    pub fn new(timestamps: Vec<i64>, target: Vec<f64>, covariates: Vec<Covariate>) -> Result<Self, DataError> {
        let n = target.len();
        if timestamps.len() != n {
            return Err(DataError::LengthMismatch {
                column: String::from("timestamp"),
                expected: n,
                found: timestamps.len(),
            });
        }
        for c in &covariates {
            if c.values.len() != n {
                return Err(DataError::LengthMismatch {
                    column: c.name.clone(),
                    expected: n,
                    found: c.values.len(),
                });
            }
        }
        if let Some(row) = timestamps.windows(2).position(|w| w[1] <= w[0]) {
            return Err(DataError::NonMonotoneTimestamp { row: row + 1 });
        }
        if let Some(row) = target.iter().position(|v| !v.is_finite()) {
            return Err(DataError::NonFinite {
                row,
                column: String::from("target"),
            });
        }
        for c in &covariates {
            if let Some(row) = c.values.iter().position(|v| !v.is_finite()) {
                return Err(DataError::NonFinite {
                    row,
                    column: c.name.clone(),
                });
            }
        }
        Ok(SeriesPanel {
            timestamps,
            target,
            covariates,
        })
    }

    pub fn len(&self) -> usize {
        self.target.len()
    }

    pub fn is_empty(&self) -> bool {
        self.target.is_empty()
    }

    pub fn n_covariates(&self) -> usize {
        self.covariates.len()
    }

    pub fn timestamps(&self) -> &[i64] {
        &self.timestamps
    }

    pub fn target(&self) -> &[f64] {
        &self.target
    }

    pub fn covariates(&self) -> &[Covariate] {
        &self.covariates
    }

    pub fn covariate(&self, i: usize) -> &Covariate {
        &self.covariates[i]
    }

    /// Returns a copy with covariate columns reordered by `order`.
    pub fn permute_covariates(&self, order: &[usize]) -> Self {
        SeriesPanel {
            timestamps: self.timestamps.clone(),
            target: self.target.clone(),
            covariates: order.iter().map(|&i| self.covariates[i].clone()).collect(),
        }
    }
}
