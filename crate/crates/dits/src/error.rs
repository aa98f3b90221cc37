use std::path::PathBuf;

use dits_core::data::DataError;
use dits_core::flow::FlowError;
use dits_core::metrics::MetricError;
use dits_core::model::ModelError;
use serde::Serialize;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}, row {row}, column {column}: {message}")]
    Parse {
        path: PathBuf,
        /// 1-based data row, header excluded.
        row: usize,
        column: String,
        message: String,
    },
    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },
    #[error("invalid configuration: {}", .0.join("; "))]
    Config(Vec<String>),
    #[error("checkpoint does not fit the dataset: {0}")]
    Incompatible(String),
    #[error("forecast and truth windows do not line up: {0}")]
    Misaligned(String),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Flow(#[from] FlowError),
    #[error(transparent)]
    Metric(#[from] MetricError),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Machine-readable error line written to stderr by the CLI.
#[derive(Debug, Serialize)]
pub struct ErrorRecord {
    pub error: &'static str,
    pub message: String,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub issues: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub path: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub row: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub column: Option<String>,
}

impl Error {
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Io { .. } => "io",
            Error::Parse { .. } => "parse",
            Error::Format { .. } => "format",
            Error::Config(_) => "config",
            Error::Incompatible(_) => "incompatible",
            Error::Misaligned(_) => "misaligned",
            Error::Data(_) => "data",
            Error::Model(_) => "model",
            Error::Flow(_) => "flow",
            Error::Metric(_) => "metric",
        }
    }

    pub fn record(&self) -> ErrorRecord {
        let mut rec = ErrorRecord {
            error: self.kind(),
            message: self.to_string(),
            issues: Vec::new(),
            path: None,
            row: None,
            column: None,
        };
        match self {
            Error::Io { path, .. } | Error::Format { path, .. } => rec.path = Some(path.clone()),
            Error::Parse { path, row, column, .. } => {
                rec.path = Some(path.clone());
                rec.row = Some(*row);
                rec.column = Some(column.clone());
            }
            Error::Config(issues)
            | Error::Model(ModelError::InvalidConfig(issues))
            | Error::Flow(FlowError::InvalidConfig(issues)) => rec.issues = issues.clone(),
            Error::Data(DataError::NonFinite { row, column }) => {
                rec.row = Some(*row);
                rec.column = Some(column.clone());
            }
            _ => {}
        }
        rec
    }
}

pub(crate) fn io_err(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> Error {
    let path = path.into();
    move |source| Error::Io { path, source }
}
