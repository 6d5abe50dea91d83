use std::path::Path;

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;

/// Result of one command: pass/fail plus a JSON payload.
pub struct Outcome {
    pub passed: bool,
    pub reason: Option<String>,
    pub result: serde_json::Value,
}

impl Outcome {
    pub fn passed(result: serde_json::Value) -> Self {
        Self {
            passed: true,
            reason: None,
            result,
        }
    }

    pub fn failed(reason: String, result: serde_json::Value) -> Self {
        Self {
            passed: false,
            reason: Some(reason),
            result,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportRecord {
    pub tool: String,
    pub version: String,
    pub command: String,
    /// Experiment seed as hex.
    pub seed: String,
    pub config: ExperimentConfig,
    pub passed: bool,
    pub reason: Option<String>,
    pub result: serde_json::Value,
    pub elapsed_ms: u128,
}

#[derive(Clone, Debug, Serialize)]
pub struct PerXRow {
    pub x: usize,
    pub coords: String,
    pub f: f64,
    pub output: Option<f64>,
    pub success: Option<f64>,
    pub sq_error: Option<f64>,
}

pub fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).with_context(|| format!("writing {}", path.display()))?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_report(path: &Path, record: &ReportRecord) -> Result<()> {
    let text = serde_json::to_string_pretty(record)?;
    std::fs::write(path, text + "\n").with_context(|| format!("writing {}", path.display()))
}
