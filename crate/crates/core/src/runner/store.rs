//! On-disk run store.
//!
//! Layout: `<root>/<run_id>/manifest.json` and `<root>/<run_id>/responses.jsonl`.
//! The manifest carries the SHA-256 of `responses.jsonl`; loading verifies it
//! and recomputes the run id from the stored config and ids.

use std::fs;
use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{compute_run_id, ExperimentConfig, GenerationMode, RunArtifact, RunEntry, RunError};
use crate::promptkit::TemplateId;

pub const MANIFEST_FILE: &str = "manifest.json";
pub const RESPONSES_FILE: &str = "responses.jsonl";
const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
struct Manifest {
    schema_version: u32,
    run_id: String,
    config: ExperimentConfig,
    corpus_ids: Vec<String>,
    exemplar_ids: Vec<String>,
    started_at: DateTime<Utc>,
    finished_at: DateTime<Utc>,
    n_responses: usize,
    n_failures: usize,
    responses_sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub run_id: String,
    pub mode: GenerationMode,
    pub template: TemplateId,
    pub model: String,
    pub corpus: String,
    pub n_responses: usize,
    pub n_failures: usize,
    pub started_at: DateTime<Utc>,
}

#[derive(Debug, Clone)]
pub struct RunStore {
    root: PathBuf,
}

impl RunStore {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn run_dir(&self, run_id: &str) -> PathBuf {
        self.root.join(run_id)
    }

    fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> RunError + '_ {
        move |source| RunError::Persistence {
            path: path.to_path_buf(),
            source,
        }
    }

    /// Writes both files, replacing any previous run with the same id.
    pub fn save(&self, artifact: &RunArtifact) -> Result<PathBuf, RunError> {
        let dir = self.run_dir(&artifact.run_id);
        fs::create_dir_all(&dir).map_err(Self::io_err(&dir))?;

        let mut responses = String::new();
        for entry in &artifact.entries {
            responses.push_str(&serde_json::to_string(entry).expect("entry serializes"));
            responses.push('\n');
        }
        let manifest = Manifest {
            schema_version: SCHEMA_VERSION,
            run_id: artifact.run_id.clone(),
            config: artifact.config.clone(),
            corpus_ids: artifact.corpus_ids.clone(),
            exemplar_ids: artifact.exemplar_ids.clone(),
            started_at: artifact.started_at,
            finished_at: artifact.finished_at,
            n_responses: artifact.responses().count(),
            n_failures: artifact.failures().count(),
            responses_sha256: hex::encode(Sha256::digest(responses.as_bytes())),
        };
        let mut manifest_text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
        manifest_text.push('\n');

        write_atomic(&dir.join(RESPONSES_FILE), responses.as_bytes())?;
        write_atomic(&dir.join(MANIFEST_FILE), manifest_text.as_bytes())?;
        Ok(dir)
    }

    fn read_manifest(&self, run_id: &str) -> Result<Manifest, RunError> {
        let path = self.run_dir(run_id).join(MANIFEST_FILE);
        if !path.is_file() {
            return Err(RunError::UnknownRun(run_id.to_string()));
        }
        let text = fs::read_to_string(&path).map_err(Self::io_err(&path))?;
        serde_json::from_str(&text).map_err(|e| RunError::CorruptArtifact {
            run_id: run_id.to_string(),
            reason: format!("manifest: {e}"),
        })
    }

    pub fn load(&self, run_id: &str) -> Result<RunArtifact, RunError> {
        let corrupt = |reason: String| RunError::CorruptArtifact {
            run_id: run_id.to_string(),
            reason,
        };
        let manifest = self.read_manifest(run_id)?;
        if manifest.schema_version != SCHEMA_VERSION {
            return Err(corrupt(format!("unsupported schema version {}", manifest.schema_version)));
        }

        let path = self.run_dir(run_id).join(RESPONSES_FILE);
        let bytes = fs::read(&path).map_err(Self::io_err(&path))?;
        let digest = hex::encode(Sha256::digest(&bytes));
        if digest != manifest.responses_sha256 {
            return Err(corrupt(format!(
                "responses checksum {digest} does not match manifest {}",
                manifest.responses_sha256
            )));
        }
        let text = String::from_utf8(bytes).map_err(|e| corrupt(e.to_string()))?;
        let entries = text
            .lines()
            .enumerate()
            .map(|(i, line)| {
                serde_json::from_str::<RunEntry>(line)
                    .map_err(|e| corrupt(format!("responses line {}: {e}", i + 1)))
            })
            .collect::<Result<Vec<_>, _>>()?;

        let expected_id = compute_run_id(&manifest.config, &manifest.corpus_ids, &manifest.exemplar_ids);
        if expected_id != manifest.run_id || manifest.run_id != run_id {
            return Err(corrupt("run id does not match manifest content".into()));
        }
        let entry_ids: Vec<&str> = entries.iter().map(RunEntry::sample_id).collect();
        if entry_ids != manifest.corpus_ids.iter().map(String::as_str).collect::<Vec<_>>() {
            return Err(corrupt("entries do not match corpus ids".into()));
        }

        Ok(RunArtifact {
            run_id: manifest.run_id,
            config: manifest.config,
            corpus_ids: manifest.corpus_ids,
            exemplar_ids: manifest.exemplar_ids,
            entries,
            started_at: manifest.started_at,
            finished_at: manifest.finished_at,
        })
    }

    /// Summaries of every run under the root, oldest first. Unreadable
    /// directories are skipped.
    pub fn list(&self) -> Result<Vec<RunSummary>, RunError> {
        if !self.root.exists() {
            return Ok(Vec::new());
        }
        let mut out = Vec::new();
        for entry in fs::read_dir(&self.root).map_err(Self::io_err(&self.root))? {
            let entry = entry.map_err(Self::io_err(&self.root))?;
            if !entry.path().is_dir() {
                continue;
            }
            let run_id = entry.file_name().to_string_lossy().into_owned();
            let Ok(m) = self.read_manifest(&run_id) else {
                continue;
            };
            out.push(RunSummary {
                model: m.config.effective_params().model,
                run_id: m.run_id,
                mode: m.config.mode.clone(),
                template: m.config.template,
                corpus: m.config.corpus.clone(),
                n_responses: m.n_responses,
                n_failures: m.n_failures,
                started_at: m.started_at,
            });
        }
        out.sort_by(|a, b| (a.started_at, &a.run_id).cmp(&(b.started_at, &b.run_id)));
        Ok(out)
    }
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), RunError> {
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, bytes).map_err(RunStore::io_err(&tmp))?;
    fs::rename(&tmp, path).map_err(RunStore::io_err(path))
}
