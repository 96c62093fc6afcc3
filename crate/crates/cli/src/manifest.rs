//! Run manifests and artifact writing. Timestamps live only in the manifest,
//! so every other artifact is a pure function of inputs and settings.

use std::path::{Path, PathBuf};

use coherelab::ingest::{sha256_hex, SourceFile};
use serde::Serialize;

use crate::config::Settings;
use crate::CliError;

/// Manifest file of a subcommand; one per subcommand so runs sharing an
/// output directory keep each other's provenance.
pub fn manifest_file(subcommand: &str) -> String {
    format!("{subcommand}.manifest.json")
}

#[derive(Debug, Clone, Serialize)]
pub struct OutputRef {
    pub file: String,
    pub sha256: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub tool: &'static str,
    pub version: &'static str,
    pub subcommand: String,
    pub timestamp: String,
    pub seed: u64,
    pub config: Settings,
    pub inputs: Vec<SourceFile>,
    pub outputs: Vec<OutputRef>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub extra: Option<serde_json::Value>,
}

/// Collects artifacts for one run and writes them with their manifest.
pub struct Artifacts {
    dir: PathBuf,
    files: Vec<(String, Vec<u8>)>,
}

pub fn to_json<T: Serialize>(value: &T) -> Vec<u8> {
    let mut out = serde_json::to_vec_pretty(value).expect("artifact serializes");
    out.push(b'\n');
    out
}

impl Artifacts {
    pub fn new(dir: &Path) -> Self {
        Self {
            dir: dir.to_path_buf(),
            files: Vec::new(),
        }
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn add(&mut self, name: &str, bytes: Vec<u8>) {
        self.files.push((name.to_string(), bytes));
    }

    pub fn write(
        self,
        subcommand: &str,
        settings: &Settings,
        inputs: Vec<SourceFile>,
        extra: Option<serde_json::Value>,
    ) -> Result<(), CliError> {
        std::fs::create_dir_all(&self.dir).map_err(|e| CliError::io(&self.dir, e))?;
        let mut outputs = Vec::new();
        for (name, bytes) in &self.files {
            let path = self.dir.join(name);
            std::fs::write(&path, bytes).map_err(|e| CliError::io(&path, e))?;
            outputs.push(OutputRef {
                file: name.clone(),
                sha256: sha256_hex(bytes),
            });
        }
        let manifest = RunManifest {
            tool: env!("CARGO_PKG_NAME"),
            version: env!("CARGO_PKG_VERSION"),
            subcommand: subcommand.into(),
            timestamp: chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true),
            seed: settings.seed,
            config: settings.clone(),
            inputs,
            outputs,
            extra,
        };
        let path = self.dir.join(manifest_file(subcommand));
        std::fs::write(&path, to_json(&manifest)).map_err(|e| CliError::io(&path, e))
    }
}
