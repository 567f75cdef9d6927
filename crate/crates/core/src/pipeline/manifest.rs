use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

use super::config::PipelineConfig;

pub const MANIFEST_FILE: &str = "manifest.json";

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArtifactRecord {
    /// Relative to the output directory, `/`-separated.
    pub path: String,
    pub stage: String,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StageTiming {
    pub stage: String,
    pub seconds: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool_version: String,
    pub config: PipelineConfig,
    /// Sorted by path.
    pub artifacts: Vec<ArtifactRecord>,
    pub stages: Vec<StageTiming>,
}

impl RunManifest {
    /// `(path, sha256)` pairs, the part of the manifest that must agree
    /// between reruns of one config.
    pub fn digests(&self) -> Vec<(String, String)> {
        self.artifacts.iter().map(|a| (a.path.clone(), a.sha256.clone())).collect()
    }

    pub fn load(dir: impl AsRef<Path>) -> Result<Self> {
        let path = dir.as_ref().join(MANIFEST_FILE);
        let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        Ok(serde_json::from_str(&text)?)
    }

    /// Checks that every listed artifact exists with its recorded digest
    /// and that the directory holds nothing else besides the manifest.
    pub fn verify(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        for a in &self.artifacts {
            let path = dir.join(&a.path);
            let bytes = std::fs::read(&path).map_err(|e| Error::io(&path, e))?;
            if sha256_hex(&bytes) != a.sha256 {
                return Err(Error::Invalid(format!("artifact {} does not match its digest", a.path)));
            }
        }
        let listed: BTreeSet<String> = self.artifacts.iter().map(|a| a.path.clone()).collect();
        let mut present = BTreeSet::new();
        collect_files(dir, dir, &mut present)?;
        present.remove(MANIFEST_FILE);
        if listed != present {
            let extra: Vec<_> = present.difference(&listed).cloned().collect();
            let missing: Vec<_> = listed.difference(&present).cloned().collect();
            return Err(Error::Invalid(format!(
                "output directory does not match the manifest (unlisted: {extra:?}, missing: {missing:?})"
            )));
        }
        Ok(())
    }
}

pub(crate) fn collect_files(root: &Path, dir: &Path, out: &mut BTreeSet<String>) -> Result<()> {
    let entries = std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    for entry in entries {
        let entry = entry.map_err(|e| Error::io(dir, e))?;
        let path = entry.path();
        if path.is_dir() {
            collect_files(root, &path, out)?;
        } else {
            out.insert(relative_name(root, &path));
        }
    }
    Ok(())
}

pub(crate) fn relative_name(root: &Path, path: &Path) -> String {
    let rel = path.strip_prefix(root).unwrap_or(path);
    rel.components()
        .map(|c| c.as_os_str().to_string_lossy().into_owned())
        .collect::<Vec<_>>()
        .join("/")
}

/// Tracks the files a run writes below the output directory.
#[derive(Debug)]
pub struct ArtifactStore {
    root: PathBuf,
    /// `(relative path, stage)` for every artifact of the run, including
    /// reused cache entries.
    records: Vec<(String, String)>,
    /// Files created or overwritten by this run.
    written: Vec<PathBuf>,
}

impl ArtifactStore {
    pub fn new(root: impl Into<PathBuf>) -> Result<Self> {
        let root = root.into();
        std::fs::create_dir_all(&root).map_err(|e| Error::io(&root, e))?;
        Ok(ArtifactStore {
            root,
            records: Vec::new(),
            written: Vec::new(),
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn path(&self, rel: &str) -> PathBuf {
        self.root.join(rel)
    }

    pub fn write(&mut self, stage: &str, rel: &str, bytes: &[u8]) -> Result<()> {
        let path = self.path(rel);
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
        std::fs::write(&path, bytes).map_err(|e| Error::io(&path, e))?;
        self.written.push(path);
        self.record(stage, rel);
        Ok(())
    }

    /// Registers a file written outside [`ArtifactStore::write`].
    pub fn written_externally(&mut self, stage: &str, rel: &str) {
        self.written.push(self.path(rel));
        self.record(stage, rel);
    }

    /// Registers an existing file reused by this run.
    pub fn reused(&mut self, stage: &str, rel: &str) {
        self.record(stage, rel);
    }

    pub fn is_recorded(&self, rel: &str) -> bool {
        self.records.iter().any(|(p, _)| p == rel)
    }

    fn record(&mut self, stage: &str, rel: &str) {
        if let Some(r) = self.records.iter_mut().find(|(p, _)| p == rel) {
            r.1 = stage.to_string();
        } else {
            self.records.push((rel.to_string(), stage.to_string()));
        }
    }

    /// Deletes every file this run wrote.
    pub fn discard_written(&mut self) {
        for path in self.written.drain(..) {
            if std::fs::remove_file(&path).is_ok() {
                log::info!("removed partial artifact {}", path.display());
            }
        }
        self.records.clear();
    }

    pub fn manifest(&self, config: &PipelineConfig, stages: Vec<StageTiming>) -> Result<RunManifest> {
        let mut artifacts = Vec::with_capacity(self.records.len());
        for (rel, stage) in &self.records {
            let path = self.path(rel);
            let bytes = std::fs::read(&path).map_err(|e| Error::io(&path, e))?;
            artifacts.push(ArtifactRecord {
                path: rel.clone(),
                stage: stage.clone(),
                sha256: sha256_hex(&bytes),
                bytes: bytes.len() as u64,
            });
        }
        artifacts.sort_by(|a, b| a.path.cmp(&b.path));
        Ok(RunManifest {
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            config: config.clone(),
            artifacts,
            stages,
        })
    }
}
