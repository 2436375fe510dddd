//! Run manifests: the resolved parameters of a run, hashed so that every
//! output file can name the exact configuration that produced it.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use super::CliError;

#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub tool: &'static str,
    pub version: &'static str,
    pub subcommand: &'static str,
    pub params: BTreeMap<String, serde_json::Value>,
    /// Hash of everything above; output paths are deliberately excluded.
    pub hash: String,
    pub outputs: Vec<PathBuf>,
}

#[derive(Serialize)]
struct Hashed<'a> {
    tool: &'a str,
    version: &'a str,
    subcommand: &'a str,
    params: &'a BTreeMap<String, serde_json::Value>,
}

impl RunManifest {
    pub fn new(subcommand: &'static str, params: BTreeMap<String, serde_json::Value>) -> Self {
        let tool = env!("CARGO_PKG_NAME");
        let version = env!("CARGO_PKG_VERSION");
        let canonical = serde_json::to_vec(&Hashed {
            tool,
            version,
            subcommand,
            params: &params,
        })
        .expect("manifest serialises");
        let hash = hex::encode(Sha256::digest(&canonical));
        Self {
            tool,
            version,
            subcommand,
            params,
            hash,
            outputs: Vec::new(),
        }
    }

    /// First line of every output file.
    pub fn comment_line(&self) -> String {
        format!("# manifest {}\n", self.hash)
    }

    pub fn write(&self, path: &Path) -> Result<(), CliError> {
        let mut text = serde_json::to_string_pretty(self).expect("manifest serialises");
        text.push('\n');
        std::fs::write(path, text).map_err(|e| CliError::Runtime(format!("cannot write {}: {e}", path.display())))
    }
}

/// Where the manifest of a single output file goes: `<file>.manifest.json`.
pub fn sidecar(path: &Path) -> PathBuf {
    let mut name = path.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(".manifest.json");
    path.with_file_name(name)
}

/// SHA-256 of a file's contents, used to pin input traces in a manifest.
pub fn file_digest(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}
