//! Provenance records. Reports embed a manifest; with `--out` a sidecar
//! `<out>.manifest.json` also lists the sha256 of every file written.

use std::path::{Path, PathBuf};

use anyhow::Context;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub const MANIFEST_SCHEMA_VERSION: u32 = 1;
pub const TOOL: &str = "diqkd";
pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutputDigest {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub schema_version: u32,
    pub tool: String,
    pub tool_version: String,
    pub command: String,
    /// Arguments after the program name; re-running them reproduces the outputs.
    pub argv: Vec<String>,
    /// Every parameter after defaults were filled in.
    pub params: serde_json::Value,
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub outputs: Vec<OutputDigest>,
}

impl RunManifest {
    pub fn new(command: &str, argv: &[String], params: serde_json::Value, seed: Option<u64>) -> Self {
        Self {
            schema_version: MANIFEST_SCHEMA_VERSION,
            tool: TOOL.to_string(),
            tool_version: TOOL_VERSION.to_string(),
            command: command.to_string(),
            argv: argv.to_vec(),
            params,
            seed,
            outputs: Vec::new(),
        }
    }

    pub fn record_output(&mut self, path: &Path) -> anyhow::Result<()> {
        self.outputs.push(OutputDigest { path: path.display().to_string(), sha256: sha256_file(path)? });
        Ok(())
    }

    pub fn read(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        Ok(serde_json::from_str(&text)?)
    }

    /// Outputs whose current digest no longer matches the record.
    pub fn stale_outputs(&self) -> anyhow::Result<Vec<String>> {
        let mut stale = Vec::new();
        for out in &self.outputs {
            if sha256_file(Path::new(&out.path))? != out.sha256 {
                stale.push(out.path.clone());
            }
        }
        Ok(stale)
    }
}

pub fn sha256_file(path: &Path) -> anyhow::Result<String> {
    let bytes = std::fs::read(path).with_context(|| format!("hashing {}", path.display()))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

pub fn sidecar_path(out: &Path) -> PathBuf {
    let mut name = out.as_os_str().to_owned();
    name.push(".manifest.json");
    PathBuf::from(name)
}
