//! Run manifests: enough provenance to replay any command bit-for-bit.
//!
//! Every command writes `<primary output>.manifest.json` recording the
//! resolved argv, seeds, input digests and per-stage wall times. `cf
//! replay <manifest>` re-executes the recorded argv; outputs are
//! deterministic, so artifacts reproduce byte for byte (the manifest's
//! own timings are the one thing that varies).

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::CliError;

#[derive(Debug, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    /// Arguments as given, without the binary name.
    pub argv: Vec<String>,
    pub seed: u64,
    pub stage_seeds: BTreeMap<String, u64>,
    /// sha256 of every input file actually read.
    pub inputs: BTreeMap<String, String>,
    pub outputs: Vec<String>,
    pub timings_seconds: BTreeMap<String, f64>,
}

pub struct ManifestBuilder {
    manifest: RunManifest,
    started: Instant,
    last_mark: Instant,
}

impl ManifestBuilder {
    pub fn new(command: &str, argv: Vec<String>, seed: u64) -> ManifestBuilder {
        ManifestBuilder {
            manifest: RunManifest {
                tool: "cf".into(),
                version: env!("CARGO_PKG_VERSION").into(),
                command: command.into(),
                argv,
                seed,
                stage_seeds: BTreeMap::new(),
                inputs: BTreeMap::new(),
                outputs: Vec::new(),
                timings_seconds: BTreeMap::new(),
            },
            started: Instant::now(),
            last_mark: Instant::now(),
        }
    }

    pub fn record_input(&mut self, path: &Path) -> Result<(), CliError> {
        let bytes = fs::read(path)
            .map_err(|e| CliError::data(format!("cannot read {}: {e}", path.display())))?;
        let digest = hex::encode(Sha256::digest(&bytes));
        self.manifest
            .inputs
            .insert(path.display().to_string(), digest);
        Ok(())
    }

    pub fn record_output(&mut self, path: &Path) {
        self.manifest.outputs.push(path.display().to_string());
    }

    pub fn stage_seed(&mut self, stage: &str) -> u64 {
        let seed = derive_stage_seed(self.manifest.seed, stage);
        self.manifest.stage_seeds.insert(stage.into(), seed);
        seed
    }

    /// Records the wall time since the previous mark under `stage`.
    pub fn mark(&mut self, stage: &str) {
        let now = Instant::now();
        self.manifest.timings_seconds.insert(
            stage.into(),
            now.duration_since(self.last_mark).as_secs_f64(),
        );
        self.last_mark = now;
    }

    pub fn write(mut self, primary_output: &Path) -> Result<(), CliError> {
        self.manifest
            .timings_seconds
            .insert("total".into(), self.started.elapsed().as_secs_f64());
        let path = manifest_path(primary_output);
        let json = serde_json::to_string_pretty(&self.manifest)
            .map_err(|e| CliError::internal(format!("manifest serialization: {e}")))?;
        fs::write(&path, json)
            .map_err(|e| CliError::data(format!("cannot write {}: {e}", path.display())))?;
        log::info!("manifest written to {}", path.display());
        Ok(())
    }
}

pub fn manifest_path(primary_output: &Path) -> std::path::PathBuf {
    let mut name = primary_output
        .file_name()
        .unwrap_or_default()
        .to_os_string();
    name.push(".manifest.json");
    primary_output.with_file_name(name)
}

/// Per-stage seed: the global seed mixed with a hash of the stage name,
/// so stages can be re-run independently yet reproducibly.
pub fn derive_stage_seed(global: u64, stage: &str) -> u64 {
    let digest = Sha256::digest(stage.as_bytes());
    let mut bytes = [0u8; 8];
    bytes.copy_from_slice(&digest[..8]);
    global ^ u64::from_le_bytes(bytes)
}

pub fn load(path: &Path) -> Result<RunManifest, CliError> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::data(format!("cannot read {}: {e}", path.display())))?;
    serde_json::from_str(&text)
        .map_err(|e| CliError::data(format!("bad manifest {}: {e}", path.display())))
}
