//! Output directories and run manifests.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use chrono::{DateTime, SecondsFormat, Utc};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub const MANIFEST: &str = "manifest.json";
pub const RESOLVED_CONFIG: &str = "config.toml";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutputFile {
    /// Relative to the output directory.
    pub path: String,
    pub bytes: u64,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub config: serde_json::Value,
    pub seed: u64,
    pub version: String,
    pub started: String,
    pub finished: String,
    pub outputs: Vec<OutputFile>,
}

impl RunManifest {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
    }
}

pub fn sha256_file(path: &Path) -> Result<(u64, String)> {
    let bytes = fs::read(path).with_context(|| format!("hashing {}", path.display()))?;
    Ok((bytes.len() as u64, hex::encode(Sha256::digest(&bytes))))
}

/// An output directory collecting the files a command writes.
pub struct Run {
    dir: PathBuf,
    outputs: Vec<String>,
    started: DateTime<Utc>,
}

impl Run {
    /// Creates `dir`, refusing a non-empty one unless `force`.
    pub fn create(dir: &Path, force: bool) -> Result<Self> {
        if dir.exists() {
            if !dir.is_dir() {
                bail!("{} exists and is not a directory", dir.display());
            }
            if !force && fs::read_dir(dir)?.next().is_some() {
                bail!("output directory {} is not empty (pass --force to overwrite)", dir.display());
            }
        }
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        Ok(Self { dir: dir.to_path_buf(), outputs: Vec::new(), started: Utc::now() })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    /// Path for output `name`, recorded for the manifest.
    pub fn file(&mut self, name: &str) -> PathBuf {
        if !self.outputs.iter().any(|o| o == name) {
            self.outputs.push(name.to_string());
        }
        self.dir.join(name)
    }

    /// Writes the resolved config and the manifest, hashing every recorded output.
    pub fn finish<C: Serialize>(mut self, command: &str, seed: u64, config: &C) -> Result<RunManifest> {
        let resolved = toml::to_string(config).context("serializing resolved config")?;
        fs::write(self.file(RESOLVED_CONFIG), resolved)?;
        let mut outputs = Vec::with_capacity(self.outputs.len());
        for name in &self.outputs {
            let (bytes, sha256) = sha256_file(&self.dir.join(name))?;
            outputs.push(OutputFile { path: name.clone(), bytes, sha256 });
        }
        let stamp = |t: DateTime<Utc>| t.to_rfc3339_opts(SecondsFormat::Millis, true);
        let manifest = RunManifest {
            command: command.to_string(),
            config: serde_json::to_value(config)?,
            seed,
            version: env!("CARGO_PKG_VERSION").to_string(),
            started: stamp(self.started),
            finished: stamp(Utc::now()),
            outputs,
        };
        fs::write(self.dir.join(MANIFEST), serde_json::to_string_pretty(&manifest)? + "\n")?;
        Ok(manifest)
    }
}
