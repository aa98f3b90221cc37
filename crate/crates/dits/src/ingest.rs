//! CSV panels described by a small TOML manifest.
//!
//! ```toml
//! path = "np.csv"            # relative to the manifest
//! timestamp = "date"
//! timestamp_format = "%Y-%m-%d %H:%M:%S"
//! target = "price"
//!
//! [[covariates]]
//! name = "grid_load"
//! kind = "known-future"
//! ```
//!
//! Row numbers in errors count data rows from 1, header excluded.

use std::path::{Path, PathBuf};

use chrono::{DateTime, NaiveDate, NaiveDateTime};
use dits_core::data::{Covariate, CovariateKind, SeriesPanel};
use serde::{Deserialize, Serialize};

use crate::error::{io_err, Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ColumnSpec {
    pub name: String,
    pub kind: CovariateKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub path: PathBuf,
    pub timestamp: String,
    /// chrono format string; integers and RFC 3339 are accepted without one.
    #[serde(default)]
    pub timestamp_format: Option<String>,
    pub target: String,
    #[serde(default)]
    pub covariates: Vec<ColumnSpec>,
}

impl Manifest {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(io_err(path))?;
        let mut m: Manifest = toml::from_str(&text).map_err(|e| Error::Format {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        if m.path.is_relative() {
            if let Some(dir) = path.parent() {
                m.path = dir.join(&m.path);
            }
        }
        Ok(m)
    }
}

/// Seconds since the Unix epoch.
fn parse_timestamp(s: &str, format: Option<&str>) -> Result<i64, String> {
    if let Ok(v) = s.parse::<i64>() {
        return Ok(v);
    }
    if let Some(f) = format {
        let has_time = ["%H", "%M", "%S", "%T", "%R", "%I", "%k", "%l"]
            .iter()
            .any(|p| f.contains(p));
        if has_time {
            return NaiveDateTime::parse_from_str(s, f)
                .map(|t| t.and_utc().timestamp())
                .map_err(|e| format!("timestamp {s:?} does not match {f:?}: {e}"));
        }
        return NaiveDate::parse_from_str(s, f)
            .map(|d| d.and_hms_opt(0, 0, 0).unwrap_or_default().and_utc().timestamp())
            .map_err(|e| format!("timestamp {s:?} does not match {f:?}: {e}"));
    }
    if let Ok(t) = DateTime::parse_from_rfc3339(s) {
        return Ok(t.timestamp());
    }
    for f in ["%Y-%m-%d %H:%M:%S", "%Y-%m-%dT%H:%M:%S", "%Y-%m-%d %H:%M"] {
        if let Ok(t) = NaiveDateTime::parse_from_str(s, f) {
            return Ok(t.and_utc().timestamp());
        }
    }
    NaiveDate::parse_from_str(s, "%Y-%m-%d")
        .map(|d| d.and_hms_opt(0, 0, 0).unwrap_or_default().and_utc().timestamp())
        .map_err(|_| format!("unrecognized timestamp {s:?}"))
}

pub fn load_csv(manifest: &Manifest) -> Result<SeriesPanel> {
    let path = manifest.path.as_path();
    let file = std::fs::File::open(path).map_err(io_err(path))?;
    read_csv(file, manifest)
}

/// Parses a panel from any reader; `manifest.path` is only used in error messages.
pub fn read_csv(reader: impl std::io::Read, manifest: &Manifest) -> Result<SeriesPanel> {
    let path = manifest.path.as_path();
    let mut rdr = csv::ReaderBuilder::new().flexible(true).from_reader(reader);
    let header = rdr
        .headers()
        .map_err(|e| Error::Format {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?
        .clone();
    let find = |name: &str| {
        header
            .iter()
            .position(|h| h.trim() == name)
            .ok_or_else(|| Error::Format {
                path: path.to_path_buf(),
                message: format!("header has no column {name:?}"),
            })
    };
    let ts_col = find(&manifest.timestamp)?;
    let y_col = find(&manifest.target)?;
    let cov_cols = manifest
        .covariates
        .iter()
        .map(|c| find(&c.name))
        .collect::<Result<Vec<_>>>()?;

    let mut timestamps = Vec::new();
    let mut target = Vec::new();
    let mut covs: Vec<Vec<f64>> = vec![Vec::new(); cov_cols.len()];
    for (i, rec) in rdr.records().enumerate() {
        let row = i + 1;
        let rec = rec.map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            row,
            column: String::new(),
            message: e.to_string(),
        })?;
        if rec.len() != header.len() {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                row,
                column: String::new(),
                message: format!("expected {} fields, found {}", header.len(), rec.len()),
            });
        }
        let bad = |column: &str, message: String| Error::Parse {
            path: path.to_path_buf(),
            row,
            column: column.to_string(),
            message,
        };
        let number = |col: usize, name: &str| -> Result<f64> {
            let s = rec[col].trim();
            let v: f64 = s
                .parse()
                .map_err(|_| bad(name, format!("cannot parse {s:?} as a number")))?;
            if !v.is_finite() {
                return Err(bad(name, format!("non-finite value {s:?}")));
            }
            Ok(v)
        };
        let ts = parse_timestamp(rec[ts_col].trim(), manifest.timestamp_format.as_deref())
            .map_err(|m| bad(&manifest.timestamp, m))?;
        if timestamps.last().is_some_and(|&prev| ts <= prev) {
            return Err(bad(
                &manifest.timestamp,
                String::from("timestamps must be strictly increasing"),
            ));
        }
        timestamps.push(ts);
        target.push(number(y_col, &manifest.target)?);
        for (k, (&col, spec)) in cov_cols.iter().zip(&manifest.covariates).enumerate() {
            covs[k].push(number(col, &spec.name)?);
        }
    }
    let covariates = manifest
        .covariates
        .iter()
        .zip(covs)
        .map(|(spec, values)| Covariate {
            name: spec.name.clone(),
            kind: spec.kind,
            values,
        })
        .collect();
    Ok(SeriesPanel::new(timestamps, target, covariates)?)
}

/// Writes a panel in the layout `read_csv` expects (integer timestamps).
pub fn write_csv(panel: &SeriesPanel, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::Format {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    let fmt_err = |e: csv::Error| Error::Format {
        path: path.to_path_buf(),
        message: e.to_string(),
    };
    let mut header = vec![String::from("timestamp"), String::from("target")];
    header.extend(panel.covariates().iter().map(|c| c.name.clone()));
    w.write_record(&header).map_err(fmt_err)?;
    for t in 0..panel.len() {
        let mut row = vec![panel.timestamps()[t].to_string(), panel.target()[t].to_string()];
        row.extend(panel.covariates().iter().map(|c| c.values[t].to_string()));
        w.write_record(&row).map_err(fmt_err)?;
    }
    w.flush().map_err(io_err(path))
}

/// Manifest matching the output of [`write_csv`].
pub fn manifest_for(panel: &SeriesPanel, csv_path: &Path) -> Manifest {
    Manifest {
        path: csv_path.to_path_buf(),
        timestamp: String::from("timestamp"),
        timestamp_format: None,
        target: String::from("target"),
        covariates: panel
            .covariates()
            .iter()
            .map(|c| ColumnSpec {
                name: c.name.clone(),
                kind: c.kind,
            })
            .collect(),
    }
}
