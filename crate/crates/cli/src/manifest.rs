//! Run manifest: the record that makes an output directory reproducible.
//!
//! The manifest lists every emitted file plus the exact configuration
//! echo; it is written last, so a directory containing a manifest is a
//! complete run.

use serde::{Deserialize, Serialize};
use std::path::Path;

pub const MANIFEST_FILE: &str = "manifest.toml";
pub const CONFIG_ECHO_FILE: &str = "config.toml";
pub const SUMMARY_FILE: &str = "summary.csv";
pub const OVERALL_FILE: &str = "overall.csv";

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub schema: String,
    /// Filter variant: "ek" or "ipl".
    pub filter: String,
    pub seed: u64,
    pub runs: usize,
    pub version: String,
    /// Configuration echo (relative path); re-running it reproduces the
    /// estimate columns byte for byte.
    pub config: String,
    pub summary: String,
    pub overall: String,
    pub run_files: Vec<String>,
    /// Failed runs as "run N: message".
    pub failures: Vec<String>,
}

impl RunManifest {
    pub fn load(dir: &Path) -> Result<Self, String> {
        let path = dir.join(MANIFEST_FILE);
        let text = std::fs::read_to_string(&path)
            .map_err(|e| format!("missing manifest {}: {e}", path.display()))?;
        toml::from_str(&text).map_err(|e| format!("invalid manifest {}: {e}", path.display()))
    }

    pub fn save(&self, dir: &Path) -> std::io::Result<()> {
        let text = toml::to_string_pretty(self).expect("manifest serializes");
        std::fs::write(dir.join(MANIFEST_FILE), text)
    }
}
