//! JSON checkpoints. Floats are written in shortest round-trip form, so a
//! reloaded model reproduces the saved one bitwise.

use std::path::Path;

use dits_core::flow::TrainReport;
use dits_core::model::{DitsModel, ModelConfig};
use dits_core::ParamStore;
use serde::{Deserialize, Serialize};

use crate::config::GridCell;
use crate::error::{io_err, Error, Result};

pub const FORMAT_VERSION: u32 = 1;
pub const ARTIFACT_VERSION: &str = concat!("dits ", env!("CARGO_PKG_VERSION"));

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: u32,
    pub artifact_version: String,
    pub config_hash: String,
    pub seed: u64,
    pub cell: Option<GridCell>,
    pub model: ModelConfig,
    pub report: Option<TrainReport>,
    pub params: ParamStore,
}

impl Checkpoint {
    pub fn new(
        model: &DitsModel,
        config_hash: String,
        seed: u64,
        cell: Option<GridCell>,
        report: Option<TrainReport>,
    ) -> Self {
        Checkpoint {
            format: FORMAT_VERSION,
            artifact_version: String::from(ARTIFACT_VERSION),
            config_hash,
            seed,
            cell,
            model: model.config.clone(),
            report,
            params: model.params.clone(),
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_json(path, self)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(io_err(path))?;
        let ck: Checkpoint = serde_json::from_str(&text).map_err(|e| Error::Format {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        if ck.format != FORMAT_VERSION {
            return Err(Error::Format {
                path: path.to_path_buf(),
                message: format!(
                    "checkpoint format {} is not supported (expected {FORMAT_VERSION})",
                    ck.format
                ),
            });
        }
        Ok(ck)
    }

    pub fn into_model(self) -> Result<DitsModel> {
        Ok(DitsModel::from_params(self.model, self.params)?)
    }
}

pub(crate) fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::Format {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    std::fs::write(path, text + "\n").map_err(io_err(path))
}
