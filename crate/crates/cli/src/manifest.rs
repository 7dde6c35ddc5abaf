//! `manifest.json`: what a run did and the layout of every file it wrote.

use std::collections::BTreeMap;
use std::path::Path;

use anyhow::Result;
use infact_core::RunConfig;
use serde::{Deserialize, Serialize};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FileKind {
    /// CSV with a header row.
    Table,
    /// Headerless numeric CSV.
    Matrix,
    /// The key = value run configuration.
    Config,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FileEntry {
    pub path: String,
    pub kind: FileKind,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub columns: Vec<String>,
}

impl FileEntry {
    pub fn table(path: impl Into<String>, columns: &[&str]) -> Self {
        Self {
            path: path.into(),
            kind: FileKind::Table,
            columns: columns.iter().map(|c| c.to_string()).collect(),
        }
    }

    pub fn matrix(path: impl Into<String>) -> Self {
        Self {
            path: path.into(),
            kind: FileKind::Matrix,
            columns: Vec::new(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RunStatus {
    Complete,
    /// Stopped early; checkpoints allow `--resume`.
    Interrupted,
    /// Finished, but some benchmark replicates failed.
    Partial,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub schema_version: u32,
    pub tool: String,
    pub version: String,
    pub mode: String,
    pub status: RunStatus,
    pub prior: String,
    pub seed: u64,
    pub workers: usize,
    pub wall_seconds: f64,
    /// Resolved configuration; `--config manifest.json` reads it back.
    pub config: BTreeMap<String, String>,
    pub files: Vec<FileEntry>,
}

impl Manifest {
    pub fn new(mode: &str, cfg: &RunConfig) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            tool: env!("CARGO_PKG_NAME").to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            mode: mode.to_string(),
            status: RunStatus::Complete,
            prior: cfg.prior.to_string(),
            seed: cfg.seed,
            workers: rayon::current_num_threads(),
            wall_seconds: 0.0,
            config: cfg.to_pairs().into_iter().map(|(k, v)| (k.to_string(), v)).collect(),
            files: vec![FileEntry {
                path: crate::CONFIG_FILE.to_string(),
                kind: FileKind::Config,
                columns: Vec::new(),
            }],
        }
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::write(dir.join(MANIFEST_FILE), serde_json::to_string_pretty(self)? + "\n")?;
        Ok(())
    }

    pub fn read(dir: &Path) -> Result<Self> {
        Ok(serde_json::from_str(&std::fs::read_to_string(
            dir.join(MANIFEST_FILE),
        )?)?)
    }
}
