use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Serialize;
use serde_json::Value;

/// Sidecar describing how an artifact was produced, so every row can be
/// regenerated from it.
#[derive(Debug, Serialize)]
pub struct ExperimentManifest {
    pub command_line: Vec<String>,
    pub parameters: Value,
    pub seeds: Vec<u64>,
    pub artifacts: Vec<PathBuf>,
    /// Wall-clock per grid cell, in the order rows are written.
    pub cell_seconds: Vec<f64>,
}

impl ExperimentManifest {
    pub fn new(parameters: Value, seeds: Vec<u64>) -> Self {
        Self {
            command_line: std::env::args().collect(),
            parameters,
            seeds,
            artifacts: Vec::new(),
            cell_seconds: Vec::new(),
        }
    }

    pub fn artifact(mut self, path: &Path) -> Self {
        self.artifacts.push(path.to_path_buf());
        self
    }

    pub fn cells(mut self, seconds: Vec<f64>) -> Self {
        self.cell_seconds = seconds;
        self
    }

    /// Writes `<primary>.manifest.json` next to the first artifact.
    pub fn write_beside(&self, primary: &Path) -> Result<PathBuf> {
        let path = sidecar(primary, "manifest.json");
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
        Ok(path)
    }
}

/// `out.json` + `report.json` → `out.report.json`.
pub fn sidecar(primary: &Path, suffix: &str) -> PathBuf {
    let mut name = primary.file_stem().unwrap_or_default().to_os_string();
    name.push(".");
    name.push(suffix);
    primary.with_file_name(name)
}
