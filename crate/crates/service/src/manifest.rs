//! Run manifests: the arguments of a CLI invocation plus hashes of what it
//! read and wrote, enough to replay it and check the outputs.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{ServiceError, ServiceResult};
use crate::store::{sha256_hex, write_atomic};

pub const MANIFEST_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileHash {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub manifest_version: u32,
    pub tool: String,
    pub tool_version: String,
    pub artifact_schema_version: u32,
    pub command: String,
    /// Arguments after the program name, as given.
    pub args: Vec<String>,
    pub seed: Option<u64>,
    pub inputs: Vec<FileHash>,
    pub outputs: Vec<FileHash>,
}

pub fn hash_file(path: &Path) -> ServiceResult<FileHash> {
    let bytes = std::fs::read(path)
        .map_err(|e| ServiceError::internal(format!("cannot hash {}: {e}", path.display())))?;
    Ok(FileHash {
        path: path.display().to_string(),
        sha256: sha256_hex(&bytes),
    })
}

impl RunManifest {
    pub fn build(
        command: &str,
        args: &[String],
        seed: Option<u64>,
        inputs: &[PathBuf],
        outputs: &[PathBuf],
    ) -> ServiceResult<RunManifest> {
        Ok(RunManifest {
            manifest_version: MANIFEST_VERSION,
            tool: env!("CARGO_PKG_NAME").to_string(),
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            artifact_schema_version: noshow_core::pipeline::ARTIFACT_SCHEMA_VERSION,
            command: command.to_string(),
            args: args.to_vec(),
            seed,
            inputs: inputs.iter().map(|p| hash_file(p)).collect::<ServiceResult<_>>()?,
            outputs: outputs.iter().map(|p| hash_file(p)).collect::<ServiceResult<_>>()?,
        })
    }

    pub fn write(&self, path: &Path) -> ServiceResult<()> {
        write_atomic(path, serde_json::to_string_pretty(self)?.as_bytes())?;
        Ok(())
    }

    pub fn read(path: &Path) -> ServiceResult<RunManifest> {
        let text = std::fs::read_to_string(path)?;
        let m: RunManifest = serde_json::from_str(&text)?;
        if m.manifest_version != MANIFEST_VERSION {
            return Err(ServiceError::validation(format!(
                "manifest version {} (expected {MANIFEST_VERSION})",
                m.manifest_version
            )));
        }
        Ok(m)
    }
}

/// Where the manifest for a run goes when `--manifest` is not given.
pub fn default_path(first_output: &Path) -> PathBuf {
    let mut name = first_output.file_name().unwrap_or_default().to_os_string();
    name.push(".manifest.json");
    first_output.with_file_name(name)
}
