//! Run manifests: every file output is accompanied by a JSON sidecar with
//! the resolved parameters and a SHA-256 digest of the bytes written.

use cfim::config::SystemConfig;
use serde::Serialize;
use sha2::{Digest, Sha256};
use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

#[derive(Serialize)]
pub struct Manifest {
    pub subcommand: String,
    pub version: String,
    pub seed: u64,
    pub threads: usize,
    pub config: SystemConfig,
    pub params: serde_json::Value,
    pub outputs: Vec<OutputRecord>,
    pub created_unix_ms: u128,
}

#[derive(Serialize)]
pub struct OutputRecord {
    pub path: String,
    pub sha256: String,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

impl Manifest {
    pub fn new(
        subcommand: &str,
        seed: u64,
        threads: usize,
        config: &SystemConfig,
        params: serde_json::Value,
    ) -> Self {
        Manifest {
            subcommand: subcommand.to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            seed,
            threads,
            config: *config,
            params,
            outputs: Vec::new(),
            created_unix_ms: SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map(|d| d.as_millis())
                .unwrap_or(0),
        }
    }

    pub fn record(&mut self, path: &Path, bytes: &[u8]) {
        self.outputs.push(OutputRecord {
            path: path.display().to_string(),
            sha256: sha256_hex(bytes),
        });
    }

    /// Sidecar path `<out>.manifest.json` of the first recorded output.
    pub fn write_sidecar(&self, primary: &Path) -> std::io::Result<()> {
        let sidecar = primary.with_file_name(format!(
            "{}.manifest.json",
            primary
                .file_name()
                .map(|n| n.to_string_lossy().into_owned())
                .unwrap_or_else(|| "out".to_string())
        ));
        let text = serde_json::to_string_pretty(self).expect("manifest serializes");
        std::fs::write(sidecar, text)
    }
}
