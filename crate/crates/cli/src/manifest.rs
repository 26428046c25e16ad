use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use anyhow::Result;
use iss_core::io::{file_digest, sha256_hex};
use serde::Serialize;

use crate::config::RunConfig;

pub const MANIFEST_FILE: &str = "manifest.json";
pub const CONFIG_ECHO_FILE: &str = "run_config.toml";

/// Record of one run. Holds no timestamps or host details, so identical
/// inputs give identical bytes.
#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: String,
    pub config: RunConfig,
    pub seed: Option<u64>,
    /// Input path to SHA-256.
    pub inputs: BTreeMap<String, String>,
    /// Output file name to SHA-256.
    pub outputs: BTreeMap<String, String>,
    pub headline: serde_json::Value,
}

#[derive(Debug, Default)]
pub struct OutputSet {
    files: BTreeMap<String, String>,
}

impl OutputSet {
    pub fn write(&mut self, dir: &Path, name: &str, bytes: &[u8]) -> Result<()> {
        fs::write(dir.join(name), bytes)?;
        self.files.insert(name.to_string(), sha256_hex(bytes));
        Ok(())
    }

    pub fn write_json<T: Serialize>(&mut self, dir: &Path, name: &str, value: &T) -> Result<()> {
        let mut s = serde_json::to_string_pretty(value)?;
        s.push('\n');
        self.write(dir, name, s.as_bytes())
    }

    pub fn finish(
        self,
        dir: &Path,
        command: &str,
        config: &RunConfig,
        inputs: &[&Path],
        headline: serde_json::Value,
    ) -> Result<()> {
        let mut digests = BTreeMap::new();
        for p in inputs {
            digests.insert(p.display().to_string(), file_digest(p)?);
        }
        let echo = config.to_toml();
        fs::write(dir.join(CONFIG_ECHO_FILE), &echo)?;
        let m = RunManifest {
            tool: "iss",
            version: env!("CARGO_PKG_VERSION"),
            command: command.to_string(),
            config: config.clone(),
            seed: config.seed.or(config.simulation.as_ref().and_then(|s| s.seed0)),
            inputs: digests,
            outputs: self.files,
            headline,
        };
        let mut s = serde_json::to_string_pretty(&m)?;
        s.push('\n');
        fs::write(dir.join(MANIFEST_FILE), s)?;
        Ok(())
    }
}
