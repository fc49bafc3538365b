//! Run manifest written next to every command's outputs.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};
use time::format_description::well_known::Rfc3339;
use time::OffsetDateTime;

use crate::{CmdResult, Failure};

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Serialize)]
pub struct RunManifest {
    tool: &'static str,
    version: &'static str,
    command: &'static str,
    #[serde(skip_serializing_if = "Option::is_none")]
    config_path: Option<PathBuf>,
    /// SHA-256 of the config file bytes, hex encoded.
    #[serde(skip_serializing_if = "Option::is_none")]
    config_sha256: Option<String>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    inputs: Vec<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    seed: Option<u64>,
    started: String,
    finished: String,
    outputs: Vec<PathBuf>,
}

fn now() -> String {
    OffsetDateTime::now_utc()
        .format(&Rfc3339)
        .unwrap_or_default()
}

impl RunManifest {
    pub fn start(command: &'static str) -> Self {
        Self {
            tool: env!("CARGO_PKG_NAME"),
            version: env!("CARGO_PKG_VERSION"),
            command,
            config_path: None,
            config_sha256: None,
            inputs: Vec::new(),
            seed: None,
            started: now(),
            finished: String::new(),
            outputs: Vec::new(),
        }
    }

    /// Records the config path and hashes the bytes currently on disk.
    pub fn config(&mut self, path: &Path) -> Result<&mut Self, Failure> {
        let bytes = fs::read(path)
            .map_err(|e| Failure::Io(format!("cannot read {}: {e}", path.display())))?;
        self.config_sha256 = Some(hex::encode(Sha256::digest(&bytes)));
        self.config_path = Some(path.to_path_buf());
        Ok(self)
    }

    pub fn input(&mut self, path: &Path) -> &mut Self {
        self.inputs.push(path.to_path_buf());
        self
    }

    pub fn seed(&mut self, seed: u64) -> &mut Self {
        self.seed = Some(seed);
        self
    }

    pub fn output(&mut self, path: &Path) -> &mut Self {
        self.outputs.push(path.to_path_buf());
        self
    }

    pub fn finish(&mut self, dir: &Path) -> CmdResult {
        self.finished = now();
        let path = dir.join(MANIFEST_FILE);
        loopsig::io::write_json(&path, self).map_err(Failure::from)
    }
}
