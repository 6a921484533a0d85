//! Artifact writing and the run manifest that inventories it.

use std::collections::BTreeMap;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const SCHEMA_VERSION: u32 = 1;

/// Writes files below one root and remembers their relative paths.
#[derive(Debug)]
pub struct Artifacts {
    root: PathBuf,
    prefix: PathBuf,
    written: Vec<PathBuf>,
}

impl Artifacts {
    pub fn new(root: impl Into<PathBuf>) -> io::Result<Self> {
        let root = root.into();
        fs::create_dir_all(&root)?;
        Ok(Self { root, prefix: PathBuf::new(), written: Vec::new() })
    }

    /// Subsequent files go to `<root>/<dir>`.
    pub fn enter(&mut self, dir: &str) -> io::Result<()> {
        self.prefix = PathBuf::from(dir);
        fs::create_dir_all(self.root.join(&self.prefix))
    }

    pub fn leave(&mut self) {
        self.prefix = PathBuf::new();
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    fn target(&mut self, name: &str) -> PathBuf {
        let rel = self.prefix.join(name);
        let path = self.root.join(&rel);
        if !self.written.contains(&rel) {
            self.written.push(rel);
        }
        path
    }

    pub fn write_bytes(&mut self, name: &str, bytes: &[u8]) -> io::Result<()> {
        let path = self.target(name);
        fs::write(path, bytes)
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> io::Result<()> {
        let mut text = serde_json::to_string_pretty(value).map_err(io::Error::other)?;
        text.push('\n');
        self.write_bytes(name, text.as_bytes())
    }

    pub fn write_csv<T: Serialize>(&mut self, name: &str, rows: impl IntoIterator<Item = T>) -> io::Result<()> {
        let mut w = csv::Writer::from_writer(Vec::new());
        for row in rows {
            w.serialize(row).map_err(io::Error::other)?;
        }
        let bytes = w.into_inner().map_err(|e| io::Error::other(e.to_string()))?;
        self.write_bytes(name, &bytes)
    }

    /// Relative paths of everything written so far, sorted.
    pub fn files(&self) -> Vec<PathBuf> {
        let mut v = self.written.clone();
        v.sort();
        v
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileEntry {
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StreamEntry {
    pub label: String,
    pub id: u64,
    /// Number of trial indices drawn from the stream, `0..count`.
    pub count: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedDerivation {
    pub master_seed: u64,
    /// How a trial seed follows from the master seed, a stream id and an index.
    pub rule: String,
    pub generator: String,
    pub streams: Vec<StreamEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub schema_version: u32,
    pub tool: String,
    pub tool_version: String,
    pub experiment: String,
    pub config_source: String,
    /// Resolved configuration, including defaults and the seed override.
    pub config: serde_json::Value,
    pub seeds: SeedDerivation,
    pub started_unix_ms: u128,
    pub finished_unix_ms: u128,
    pub elapsed_seconds: BTreeMap<String, f64>,
    pub files: Vec<FileEntry>,
}

pub fn sha256_file(path: &Path) -> io::Result<(String, u64)> {
    let bytes = fs::read(path)?;
    Ok((hex::encode(Sha256::digest(&bytes)), bytes.len() as u64))
}

pub fn inventory(root: &Path, files: &[PathBuf]) -> io::Result<Vec<FileEntry>> {
    files
        .iter()
        .map(|rel| {
            let (sha256, bytes) = sha256_file(&root.join(rel))?;
            Ok(FileEntry { path: portable(rel), sha256, bytes })
        })
        .collect()
}

fn portable(rel: &Path) -> String {
    rel.components().map(|c| c.as_os_str().to_string_lossy().into_owned()).collect::<Vec<_>>().join("/")
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub enum Discrepancy {
    Missing(String),
    Modified { path: String, expected: String, found: String },
    Resized { path: String, expected: u64, found: u64 },
    Unlisted(String),
}

impl std::fmt::Display for Discrepancy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Discrepancy::Missing(p) => write!(f, "missing: {p}"),
            Discrepancy::Modified { path, expected, found } => {
                write!(f, "checksum mismatch: {path} (expected {expected}, found {found})")
            }
            Discrepancy::Resized { path, expected, found } => {
                write!(f, "size mismatch: {path} (expected {expected} bytes, found {found})")
            }
            Discrepancy::Unlisted(p) => write!(f, "not in manifest: {p}"),
        }
    }
}

fn walk(root: &Path, dir: &Path, out: &mut Vec<PathBuf>) -> io::Result<()> {
    for entry in fs::read_dir(root.join(dir))? {
        let entry = entry?;
        let rel = dir.join(entry.file_name());
        if entry.file_type()?.is_dir() {
            walk(root, &rel, out)?;
        } else {
            out.push(rel);
        }
    }
    Ok(())
}

/// Re-checks every listed file and reports files the manifest does not list.
pub fn verify(dir: &Path) -> io::Result<(Manifest, Vec<Discrepancy>)> {
    let text = fs::read_to_string(dir.join(MANIFEST_FILE))?;
    let manifest: Manifest = serde_json::from_str(&text).map_err(|e| io::Error::new(io::ErrorKind::InvalidData, e))?;
    let mut problems = Vec::new();
    for f in &manifest.files {
        let path = dir.join(&f.path);
        if !path.is_file() {
            problems.push(Discrepancy::Missing(f.path.clone()));
            continue;
        }
        let (sha, bytes) = sha256_file(&path)?;
        if bytes != f.bytes {
            problems.push(Discrepancy::Resized { path: f.path.clone(), expected: f.bytes, found: bytes });
        }
        if sha != f.sha256 {
            problems.push(Discrepancy::Modified { path: f.path.clone(), expected: f.sha256.clone(), found: sha });
        }
    }
    let mut present = Vec::new();
    walk(dir, Path::new(""), &mut present)?;
    present.sort();
    for rel in present {
        let p = portable(&rel);
        if p != MANIFEST_FILE && !manifest.files.iter().any(|f| f.path == p) {
            problems.push(Discrepancy::Unlisted(p));
        }
    }
    Ok((manifest, problems))
}
