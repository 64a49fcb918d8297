//! Run manifests: one `manifest.json` per output directory, recording
//! what ran, over which inputs (by digest), and what it produced.

use std::fs::File;
use std::io::Write;
use std::path::Path;

use anyhow::{Context, Result};
use chrono::{SecondsFormat, Utc};
use serde::Serialize;
use sha2::{Digest, Sha256};

#[derive(Serialize)]
struct InputRecord {
    role: String,
    path: String,
    /// Hex SHA-256 of the file bytes, or "unreadable".
    sha256: String,
}

#[derive(Serialize)]
struct RunManifest<'a> {
    command: &'a str,
    config: &'a serde_json::Value,
    config_sha256: String,
    inputs: &'a [InputRecord],
    #[serde(skip_serializing_if = "Option::is_none")]
    rng_seed: Option<u64>,
    /// Artifact file names, relative to the output directory.
    artifacts: &'a [String],
    started_utc: String,
    finished_utc: String,
}

/// Accumulates manifest fields while a command runs.
pub struct ManifestBuilder {
    command: String,
    config: serde_json::Value,
    rng_seed: Option<u64>,
    inputs: Vec<InputRecord>,
    artifacts: Vec<String>,
    started_utc: String,
}

impl ManifestBuilder {
    pub fn new(command: &str, config: serde_json::Value) -> Self {
        ManifestBuilder {
            command: command.to_owned(),
            config,
            rng_seed: None,
            inputs: Vec::new(),
            artifacts: Vec::new(),
            started_utc: Utc::now().to_rfc3339_opts(SecondsFormat::Millis, true),
        }
    }

    pub fn seed(mut self, seed: u64) -> Self {
        self.rng_seed = Some(seed);
        self
    }

    /// Registers an input file, digesting it immediately so the manifest
    /// reflects the bytes the command actually read.
    pub fn input(&mut self, role: &str, path: &Path) {
        self.inputs.push(InputRecord {
            role: role.to_owned(),
            path: path.display().to_string(),
            sha256: digest_file(path).unwrap_or_else(|| "unreadable".to_owned()),
        });
    }

    /// Registers a produced artifact by file name.
    pub fn artifact(&mut self, name: &str) {
        self.artifacts.push(name.to_owned());
    }

    fn write(&self, out_dir: &Path) -> Result<()> {
        let config_sha256 = {
            let bytes = serde_json::to_vec(&self.config)?;
            hex::encode(Sha256::digest(&bytes))
        };
        let manifest = RunManifest {
            command: &self.command,
            config: &self.config,
            config_sha256,
            inputs: &self.inputs,
            rng_seed: self.rng_seed,
            artifacts: &self.artifacts,
            started_utc: self.started_utc.clone(),
            finished_utc: Utc::now().to_rfc3339_opts(SecondsFormat::Millis, true),
        };
        let path = out_dir.join("manifest.json");
        let mut f = File::create(&path)
            .with_context(|| format!("cannot create {}", path.display()))?;
        serde_json::to_writer_pretty(&mut f, &manifest)?;
        writeln!(f)?;
        Ok(())
    }
}

/// Runs a command body and writes the manifest afterwards whether the
/// body succeeded or failed; a body error takes precedence over a
/// manifest-write error.
pub fn with_manifest(
    out_dir: &Path,
    mut builder: ManifestBuilder,
    body: impl FnOnce(&mut ManifestBuilder) -> Result<()>,
) -> Result<()> {
    std::fs::create_dir_all(out_dir)
        .with_context(|| format!("cannot create output directory {}", out_dir.display()))?;
    let result = body(&mut builder);
    let wrote = builder.write(out_dir);
    match (result, wrote) {
        (Err(e), _) => Err(e),
        (Ok(()), Err(e)) => Err(e),
        (Ok(()), Ok(())) => Ok(()),
    }
}

fn digest_file(path: &Path) -> Option<String> {
    let mut f = File::open(path).ok()?;
    let mut hasher = Sha256::new();
    std::io::copy(&mut f, &mut hasher).ok()?;
    Some(hex::encode(hasher.finalize()))
}
