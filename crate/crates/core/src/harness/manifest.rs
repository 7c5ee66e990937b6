//! Output inventory with content hashes, and the run manifest.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub const ARTIFACT_VERSION: &str = env!("CARGO_PKG_VERSION");

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileRecord {
    /// Relative to the output directory, `/`-separated.
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

/// A directory that remembers the hash of everything written through it.
#[derive(Debug)]
pub struct OutputDir {
    root: PathBuf,
    files: Vec<FileRecord>,
}

impl OutputDir {
    pub fn create(root: impl Into<PathBuf>) -> Result<Self> {
        let root = root.into();
        std::fs::create_dir_all(&root).map_err(|e| Error::io(&root, e))?;
        Ok(Self {
            root,
            files: Vec::new(),
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn write(&mut self, rel: &str, bytes: &[u8]) -> Result<()> {
        let path = self.root.join(rel);
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
        std::fs::write(&path, bytes).map_err(|e| Error::io(&path, e))?;
        self.files.retain(|f| f.path != rel);
        self.files.push(FileRecord {
            path: rel.to_string(),
            sha256: sha256_hex(bytes),
            bytes: bytes.len() as u64,
        });
        Ok(())
    }

    pub fn files(&self) -> &[FileRecord] {
        &self.files
    }

    pub fn into_files(mut self) -> Vec<FileRecord> {
        self.files.sort_by(|a, b| a.path.cmp(&b.path));
        self.files
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TripletRecord {
    pub seed: u64,
    pub triplet: usize,
    pub prior_id: usize,
    pub mask_id: usize,
    /// Seed of the rng every method uses for this triplet.
    pub edit_seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WallTime {
    pub stage: String,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub artifact_version: String,
    pub config_hash: String,
    /// Canonical configuration text; feeding it back reproduces the run.
    pub config: String,
    pub seeds: Vec<u64>,
    pub pairing: String,
    pub projection_seed: u64,
    pub triplets: Vec<TripletRecord>,
    /// Column names followed by rows, as written to `metrics.csv`.
    pub metrics: Vec<Vec<String>>,
    pub files: Vec<FileRecord>,
    pub wall_times: Vec<WallTime>,
    /// Hash of everything above except the wall times.
    pub fingerprint: String,
}

impl RunManifest {
    pub fn compute_fingerprint(&self) -> String {
        let mut stable = self.clone();
        stable.wall_times.clear();
        stable.fingerprint.clear();
        let json = serde_json::to_vec(&stable).expect("manifest serialises");
        sha256_hex(&json)
    }

    pub fn seal(mut self) -> Self {
        self.fingerprint = self.compute_fingerprint();
        self
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("manifest serialises")
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::format(path, e.to_string()))
    }

    /// Checks every listed file against its recorded hash.
    pub fn verify_files(&self, root: impl AsRef<Path>) -> Result<()> {
        for f in &self.files {
            let path = root.as_ref().join(&f.path);
            let bytes = std::fs::read(&path).map_err(|e| Error::io(&path, e))?;
            if sha256_hex(&bytes) != f.sha256 {
                return Err(Error::format(path, "content hash mismatch"));
            }
        }
        Ok(())
    }
}
