//! Append-only run directories and their `run.json` manifests.

use std::collections::BTreeMap;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use crate::corpus::{sha256_file, CorpusError};

pub const MANIFEST_FILE: &str = "run.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RunStatus {
    Incomplete,
    Complete,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub run_id: String,
    pub command: String,
    /// Seconds since the Unix epoch when the run started.
    pub timestamp: u64,
    pub config_hash: String,
    pub corpus_manifest_hash: Option<String>,
    pub mode: Option<String>,
    pub backend: Option<String>,
    pub version: String,
    pub status: RunStatus,
    /// SHA-256 of every file the run wrote, keyed by file name.
    pub outputs: BTreeMap<String, String>,
    #[serde(default)]
    pub notes: Vec<String>,
}

pub fn version_string() -> String {
    match option_env!("APPI_VERIFY_GIT_DESCRIBE") {
        Some(describe) => describe.to_string(),
        None => format!("v{}", env!("CARGO_PKG_VERSION")),
    }
}

/// A freshly created run directory.
#[derive(Debug)]
pub struct RunDir {
    pub path: PathBuf,
    pub manifest: RunManifest,
}

impl RunDir {
    /// Creates `<root>/<prefix>-NNNN` with the next free number; never reuses an existing directory.
    pub fn create(root: &Path, prefix: &str, config_hash: String) -> Result<Self, CorpusError> {
        fs::create_dir_all(root).map_err(|e| CorpusError::io(root, e))?;
        let mut n = next_index(root, prefix).map_err(|e| CorpusError::io(root, e))?;
        let path = loop {
            let candidate = root.join(format!("{prefix}-{n:04}"));
            match fs::create_dir(&candidate) {
                Ok(()) => break candidate,
                Err(e) if e.kind() == io::ErrorKind::AlreadyExists => n += 1,
                Err(e) => return Err(CorpusError::io(&candidate, e)),
            }
        };
        let run_id = path.file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
        let manifest = RunManifest {
            run_id,
            command: prefix.split('-').next().unwrap_or(prefix).to_string(),
            timestamp: SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0),
            config_hash,
            corpus_manifest_hash: None,
            mode: None,
            backend: None,
            version: version_string(),
            status: RunStatus::Incomplete,
            outputs: BTreeMap::new(),
            notes: Vec::new(),
        };
        let dir = RunDir { path, manifest };
        dir.save()?;
        Ok(dir)
    }

    pub fn file(&self, name: &str) -> PathBuf {
        self.path.join(name)
    }

    pub fn save(&self) -> Result<(), CorpusError> {
        let path = self.file(MANIFEST_FILE);
        let json = serde_json::to_vec_pretty(&self.manifest).expect("manifest serializes");
        fs::write(&path, json).map_err(|e| CorpusError::io(&path, e))
    }

    /// Hashes the named outputs, marks the run complete and saves.
    pub fn finish(&mut self, outputs: &[&str]) -> Result<(), CorpusError> {
        for name in outputs {
            self.manifest.outputs.insert(name.to_string(), sha256_file(&self.file(name))?);
        }
        self.manifest.status = RunStatus::Complete;
        self.save()
    }
}

fn next_index(root: &Path, prefix: &str) -> io::Result<u32> {
    let mut max = 0;
    for entry in fs::read_dir(root)? {
        let name = entry?.file_name();
        let name = name.to_string_lossy();
        if let Some(n) = name.strip_prefix(prefix).and_then(|r| r.strip_prefix('-')).and_then(|r| r.parse::<u32>().ok()) {
            max = max.max(n);
        }
    }
    Ok(max + 1)
}

impl RunManifest {
    /// Loads `run.json` from `dir` and checks every recorded output hash.
    pub fn load_verified(dir: &Path) -> Result<Self, CorpusError> {
        let path = dir.join(MANIFEST_FILE);
        let text = fs::read_to_string(&path).map_err(|e| CorpusError::io(&path, e))?;
        let manifest: RunManifest = serde_json::from_str(&text)
            .map_err(|e| CorpusError::Parse { path: path.clone(), line: e.line(), message: e.to_string() })?;
        for (name, expected) in &manifest.outputs {
            let file = dir.join(name);
            let actual = sha256_file(&file)?;
            if &actual != expected {
                return Err(CorpusError::HashMismatch { path: file, expected: expected.clone(), actual });
            }
        }
        Ok(manifest)
    }
}
