//! Run manifests and the hash chain between stages.
//!
//! Every stage records what it read and wrote in a manifest stored under
//! `<workdir>/manifests/`, one copy per output path. A later stage that
//! consumes one of those outputs recomputes its hashes and refuses to run if
//! they no longer match.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Component, Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::error::{CliError, Result};

const MANIFEST_DIR: &str = "manifests";
const TIMINGS_SUFFIX: &str = ".timings.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub run_id: String,
    pub stage: String,
    /// Settings that determine the outputs.
    pub config: Value,
    /// Settings that only affect how fast the outputs are produced.
    #[serde(default)]
    pub runtime: Value,
    pub inputs: BTreeMap<String, String>,
    pub outputs: BTreeMap<String, String>,
    pub started_unix_ms: u64,
    pub finished_unix_ms: u64,
    pub versions: BTreeMap<String, String>,
}

/// Artifact root. Relative paths given on the command line resolve here.
#[derive(Debug, Clone)]
pub struct Workdir {
    root: PathBuf,
}

impl Workdir {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn path(&self, rel: &Path) -> PathBuf {
        self.root.join(rel)
    }

    pub fn manifest_path(&self, rel: &Path) -> PathBuf {
        self.root
            .join(MANIFEST_DIR)
            .join(format!("{}.json", artifact_key(rel).replace('/', "__")))
    }

    pub fn load_manifest(&self, rel: &Path) -> Result<Option<RunManifest>> {
        let path = self.manifest_path(rel);
        match fs::read(&path) {
            Ok(bytes) => serde_json::from_slice(&bytes)
                .map(Some)
                .map_err(|e| CliError::data(format!("{}: {e}", path.display()))),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(None),
            Err(e) => Err(CliError::io(&path, e)),
        }
    }

    /// Hashes of the files that make up an artifact: the file itself, or
    /// every matrix file inside a directory.
    pub fn snapshot(&self, rel: &Path) -> Result<BTreeMap<String, String>> {
        let full = self.path(rel);
        let key = artifact_key(rel);
        let meta = fs::metadata(&full).map_err(|e| CliError::read(&full, e))?;
        let mut out = BTreeMap::new();
        if meta.is_dir() {
            for name in matrix_file_names(&full)? {
                let file = full.join(&name);
                out.insert(format!("{key}/{name}"), hash_file(&file)?);
            }
        } else {
            out.insert(key, hash_file(&full)?);
        }
        Ok(out)
    }

    /// Snapshots an input and checks it against the manifest of the run that
    /// produced it, if there is one.
    pub fn verify_input(&self, rel: &Path) -> Result<BTreeMap<String, String>> {
        let snap = self.snapshot(rel)?;
        if let Some(m) = self.load_manifest(rel)? {
            let key = artifact_key(rel);
            let prefix = format!("{key}/");
            let recorded: BTreeMap<String, String> = m
                .outputs
                .iter()
                .filter(|(k, _)| **k == key || k.starts_with(&prefix))
                .map(|(k, v)| (k.clone(), v.clone()))
                .collect();
            if recorded != snap {
                let culprit = recorded
                    .iter()
                    .find(|(k, v)| snap.get(*k) != Some(*v))
                    .map(|(k, _)| k.clone())
                    .or_else(|| snap.keys().find(|k| !recorded.contains_key(*k)).cloned())
                    .unwrap_or(key);
                return Err(CliError::data(format!(
                    "`{culprit}` does not match the manifest of {} run {}; rerun that stage",
                    m.stage, m.run_id
                )));
            }
        }
        Ok(snap)
    }

    /// Writes `manifest` once for every output artifact.
    pub fn write_manifest(&self, manifest: &RunManifest, outputs: &[&Path]) -> Result<()> {
        let mut bytes = serde_json::to_vec_pretty(manifest).expect("manifest serializes");
        bytes.push(b'\n');
        for rel in outputs {
            write_atomic(&self.manifest_path(rel), &bytes)?;
        }
        Ok(())
    }
}

/// Bookkeeping for one stage invocation.
pub struct StageRun {
    stage: &'static str,
    config: Value,
    runtime: Value,
    inputs: BTreeMap<String, String>,
    started: u64,
}

impl StageRun {
    pub fn new(stage: &'static str, config: Value) -> Self {
        Self {
            stage,
            config,
            runtime: Value::Null,
            inputs: BTreeMap::new(),
            started: unix_ms(),
        }
    }

    /// For stages whose effective config depends on their inputs.
    pub fn with_config(mut self, config: Value) -> Self {
        self.config = config;
        self
    }

    pub fn with_runtime(mut self, runtime: Value) -> Self {
        self.runtime = runtime;
        self
    }

    /// Verifies an input against the hash chain and records its hashes.
    pub fn input(&mut self, wd: &Workdir, rel: &Path) -> Result<()> {
        let snap = wd.verify_input(rel)?;
        self.inputs.extend(snap);
        Ok(())
    }

    /// Derived from the stage name, its determining config and input
    /// hashes, so an unchanged rerun gets the same id.
    pub fn run_id(&self) -> String {
        let doc = json!({
            "stage": self.stage,
            "config": self.config,
            "inputs": self.inputs,
        });
        let digest = Sha256::digest(serde_json::to_vec(&doc).expect("json value serializes"));
        hex::encode(&digest[..8])
    }

    /// Hashes the outputs and writes the manifest next to each of them.
    pub fn finish(self, wd: &Workdir, outputs: &[&Path]) -> Result<RunManifest> {
        let mut hashes = BTreeMap::new();
        for rel in outputs {
            hashes.extend(wd.snapshot(rel)?);
        }
        let manifest = RunManifest {
            run_id: self.run_id(),
            stage: self.stage.to_string(),
            config: self.config,
            runtime: self.runtime,
            inputs: self.inputs,
            outputs: hashes,
            started_unix_ms: self.started,
            finished_unix_ms: unix_ms(),
            versions: BTreeMap::from([
                ("fmv-core".to_string(), fmv_core::VERSION.to_string()),
                ("fmv-cli".to_string(), env!("CARGO_PKG_VERSION").to_string()),
            ]),
        };
        wd.write_manifest(&manifest, outputs)?;
        Ok(manifest)
    }
}

/// Normalized `/`-separated form of a workdir-relative path.
pub fn artifact_key(rel: &Path) -> String {
    let parts: Vec<String> = rel
        .components()
        .filter_map(|c| match c {
            Component::Normal(s) => Some(s.to_string_lossy().into_owned()),
            Component::ParentDir => Some("..".to_string()),
            _ => None,
        })
        .collect();
    parts.join("/")
}

/// Matrix files in a directory, sorted by name. Timing sidecars are not
/// part of the matrix artifact.
pub fn matrix_file_names(dir: &Path) -> Result<Vec<String>> {
    let mut names = Vec::new();
    for entry in fs::read_dir(dir).map_err(|e| CliError::read(dir, e))? {
        let entry = entry.map_err(|e| CliError::io(dir, e))?;
        let name = entry.file_name().to_string_lossy().into_owned();
        if name.ends_with(".json") && !name.ends_with(TIMINGS_SUFFIX) && entry.path().is_file() {
            names.push(name);
        }
    }
    names.sort();
    Ok(names)
}

pub fn timings_path(matrix_path: &Path) -> PathBuf {
    let stem = matrix_path
        .file_name()
        .map(|n| n.to_string_lossy().trim_end_matches(".json").to_string())
        .unwrap_or_default();
    matrix_path.with_file_name(format!("{stem}{TIMINGS_SUFFIX}"))
}

pub fn hash_file(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(|e| CliError::read(path, e))?;
    Ok(hex::encode(Sha256::digest(bytes)))
}

/// Replaces `path` in one step so readers never see a half-written file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let parent = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    fs::create_dir_all(parent).map_err(|e| CliError::io(parent, e))?;
    let mut tmp = tempfile::NamedTempFile::new_in(parent).map_err(|e| CliError::io(parent, e))?;
    tmp.write_all(bytes).map_err(|e| CliError::io(path, e))?;
    tmp.persist(path).map_err(|e| CliError::io(path, e.error))?;
    Ok(())
}

fn unix_ms() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map_or(0, |d| d.as_millis() as u64)
}
