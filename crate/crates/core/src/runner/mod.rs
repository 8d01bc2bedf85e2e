//! Batch generation over a corpus and persistence of run artifacts.

mod postprocess;
mod store;

use std::sync::Arc;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::backends::{
    complete, finetune_prompt, BackendError, CompletionBackend, FinetuneSerialization,
    FinishReason, GenerationParams, Retrier,
};
use crate::corpus::{Corpus, DialogueSample};
use crate::parallel::parallel_map;
use crate::promptkit::{
    assemble_prompt, select_exemplars, template, ExemplarChoice, ExemplarFilter, ExemplarSet,
    PromptError, PromptTemplate, TemplateId,
};

pub use postprocess::postprocess_response;
pub use store::{RunStore, RunSummary, MANIFEST_FILE, RESPONSES_FILE};

#[derive(Debug, Error)]
pub enum RunError {
    #[error("invalid experiment config: {0}")]
    Config(String),
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error("cannot persist run to {path}: {source}")]
    Persistence {
        path: std::path::PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("unknown run '{0}'")]
    UnknownRun(String),
    #[error("run '{run_id}' is corrupt: {reason}")]
    CorruptArtifact { run_id: String, reason: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GenerationMode {
    ZeroShot,
    FewShot,
    FineTuned { model: String },
}

/// How a fine-tuned model is prompted.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FinetunePromptStyle {
    /// Bare history plus `\nteacher:`, the same serialization used for training.
    #[default]
    Export,
    /// Template instruction plus exemplars, as in few-shot runs.
    FewShot,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub mode: GenerationMode,
    pub template: TemplateId,
    #[serde(default)]
    pub exemplars: Option<ExemplarChoice>,
    #[serde(default)]
    pub exemplar_filter: ExemplarFilter,
    #[serde(default)]
    pub params: GenerationParams,
    pub backend: String,
    /// Free-form label naming the evaluated corpus, e.g. a path or split name.
    pub corpus: String,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub finetune_prompt_style: FinetunePromptStyle,
    #[serde(default)]
    pub finetune_serialization: FinetuneSerialization,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<(), RunError> {
        let config_err = |m: &str| Err(RunError::Config(m.to_string()));
        self.params
            .validate()
            .map_err(|e| RunError::Config(e.to_string()))?;
        match (&self.mode, &self.exemplars) {
            (GenerationMode::ZeroShot, Some(ExemplarChoice::Pinned { ids, .. })) if !ids.is_empty() => {
                config_err("zero-shot runs take no exemplars")
            }
            (GenerationMode::ZeroShot, Some(ExemplarChoice::Sampled { k, .. })) if *k > 0 => {
                config_err("zero-shot runs take no exemplars")
            }
            (GenerationMode::FewShot, None) => config_err("few-shot runs need an exemplar choice"),
            (GenerationMode::FewShot, Some(ExemplarChoice::Pinned { ids, .. })) if ids.is_empty() => {
                config_err("few-shot runs need at least one exemplar")
            }
            (GenerationMode::FewShot, Some(ExemplarChoice::Sampled { k: 0, .. })) => {
                config_err("few-shot runs need k >= 1")
            }
            (GenerationMode::FineTuned { model }, _) if model.trim().is_empty() => {
                config_err("fine-tuned runs need a model id")
            }
            _ => Ok(()),
        }
    }

    fn uses_exemplars(&self) -> bool {
        match self.mode {
            GenerationMode::ZeroShot => false,
            GenerationMode::FewShot => true,
            GenerationMode::FineTuned { .. } => {
                self.finetune_prompt_style == FinetunePromptStyle::FewShot && self.exemplars.is_some()
            }
        }
    }

    /// Parameters actually sent: the fine-tuned model id replaces `params.model`,
    /// and export-style prompts stop at the serialization's stop marker unless
    /// explicit stops are configured.
    pub fn effective_params(&self) -> GenerationParams {
        let mut params = self.params.clone();
        if let GenerationMode::FineTuned { model } = &self.mode {
            params.model = model.clone();
            if self.finetune_prompt_style == FinetunePromptStyle::Export && params.stop.is_none() {
                params.stop = Some(vec![self.finetune_serialization.stop_marker.clone()]);
            }
        }
        params
    }

    /// Template whose cue label is echoed by the model. Export-style fine-tuned
    /// prompts end in `teacher:`, which is template A's cue.
    pub fn cue_template(&self) -> PromptTemplate {
        match (&self.mode, self.finetune_prompt_style) {
            (GenerationMode::FineTuned { .. }, FinetunePromptStyle::Export) => template(TemplateId::A),
            _ => template(self.template),
        }
    }

    pub fn resolve_exemplars(&self, pool: &Corpus) -> Result<ExemplarSet, RunError> {
        if !self.uses_exemplars() {
            return Ok(ExemplarSet::empty());
        }
        let choice = self
            .exemplars
            .as_ref()
            .ok_or_else(|| RunError::Config("missing exemplar choice".into()))?;
        Ok(select_exemplars(pool, choice, &self.exemplar_filter)?)
    }

    /// Exact prompt text for `sample`.
    pub fn build_prompt(&self, exemplars: &ExemplarSet, sample: &DialogueSample) -> Result<String, RunError> {
        match (&self.mode, self.finetune_prompt_style) {
            (GenerationMode::FineTuned { .. }, FinetunePromptStyle::Export) => {
                Ok(finetune_prompt(sample, &self.finetune_serialization))
            }
            _ => Ok(assemble_prompt(&template(self.template), exemplars, sample)?.text),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GeneratedResponse {
    pub sample_id: String,
    pub prompt_text: String,
    pub raw_completion: String,
    pub cleaned_response: String,
    pub finish_reason: FinishReason,
    pub attempt_count: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SampleFailure {
    pub sample_id: String,
    pub prompt_text: String,
    pub error: String,
    pub attempt_count: u32,
}

/// Outcome for one corpus sample.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum RunEntry {
    Ok(GeneratedResponse),
    Failed(SampleFailure),
}

impl RunEntry {
    pub fn sample_id(&self) -> &str {
        match self {
            RunEntry::Ok(r) => &r.sample_id,
            RunEntry::Failed(f) => &f.sample_id,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunArtifact {
    pub run_id: String,
    pub config: ExperimentConfig,
    pub corpus_ids: Vec<String>,
    pub exemplar_ids: Vec<String>,
    /// One entry per corpus sample, in corpus order.
    pub entries: Vec<RunEntry>,
    pub started_at: DateTime<Utc>,
    pub finished_at: DateTime<Utc>,
}

impl RunArtifact {
    pub fn responses(&self) -> impl Iterator<Item = &GeneratedResponse> {
        self.entries.iter().filter_map(|e| match e {
            RunEntry::Ok(r) => Some(r),
            RunEntry::Failed(_) => None,
        })
    }

    pub fn failures(&self) -> impl Iterator<Item = &SampleFailure> {
        self.entries.iter().filter_map(|e| match e {
            RunEntry::Failed(f) => Some(f),
            RunEntry::Ok(_) => None,
        })
    }

    /// True when every stored cleaned response is reproduced by post-processing
    /// its stored raw completion.
    pub fn postprocessing_is_consistent(&self) -> bool {
        let cue = self.config.cue_template();
        self.responses()
            .all(|r| postprocess_response(&r.raw_completion, &cue) == r.cleaned_response)
    }
}

/// Content hash over the config, the ordered corpus ids and the resolved
/// exemplar ids. Timestamps and worker counts do not enter it.
pub fn compute_run_id(config: &ExperimentConfig, corpus_ids: &[String], exemplar_ids: &[String]) -> String {
    #[derive(Serialize)]
    struct Identity<'a> {
        config: &'a ExperimentConfig,
        corpus_ids: &'a [String],
        exemplar_ids: &'a [String],
    }
    let canonical = serde_json::to_vec(&Identity {
        config,
        corpus_ids,
        exemplar_ids,
    })
    .expect("config serializes");
    hex::encode(Sha256::digest(&canonical))[..16].to_string()
}

pub struct Runner {
    backend: Arc<dyn CompletionBackend>,
    retrier: Arc<Retrier>,
    store: RunStore,
    workers: usize,
}

impl Runner {
    pub fn new(backend: Arc<dyn CompletionBackend>, retrier: Arc<Retrier>, store: RunStore) -> Self {
        Self {
            backend,
            retrier,
            store,
            workers: 1,
        }
    }

    pub fn with_workers(mut self, workers: usize) -> Self {
        self.workers = workers.max(1);
        self
    }

    pub fn store(&self) -> &RunStore {
        &self.store
    }

    /// Generates one response per sample of `corpus`, drawing exemplars from
    /// `exemplar_pool`. Per-sample backend failures are recorded, not raised.
    /// The artifact is saved to the store before returning.
    pub fn run(
        &self,
        config: &ExperimentConfig,
        corpus: &Corpus,
        exemplar_pool: &Corpus,
    ) -> Result<RunArtifact, RunError> {
        config.validate()?;
        let exemplars = config.resolve_exemplars(exemplar_pool)?;
        let prompts = corpus
            .samples
            .iter()
            .map(|s| config.build_prompt(&exemplars, s))
            .collect::<Result<Vec<_>, _>>()?;

        let corpus_ids = corpus.ids();
        let run_id = compute_run_id(config, &corpus_ids, &exemplars.ids());
        let params = config.effective_params();
        let cue = config.cue_template();
        let started_at = Utc::now();

        let indices: Vec<usize> = (0..corpus.len()).collect();
        let entries = parallel_map(&indices, self.workers, |&i| {
            self.generate_one(&corpus.samples[i].id, &prompts[i], &params, &cue)
        });

        let artifact = RunArtifact {
            run_id,
            config: config.clone(),
            corpus_ids,
            exemplar_ids: exemplars.ids(),
            entries,
            started_at,
            finished_at: Utc::now(),
        };
        self.store.save(&artifact)?;
        Ok(artifact)
    }

    fn generate_one(
        &self,
        sample_id: &str,
        prompt: &str,
        params: &GenerationParams,
        cue: &PromptTemplate,
    ) -> RunEntry {
        match complete(self.backend.as_ref(), &self.retrier, prompt, params) {
            Ok(result) => RunEntry::Ok(GeneratedResponse {
                sample_id: sample_id.to_string(),
                prompt_text: prompt.to_string(),
                cleaned_response: postprocess_response(&result.text, cue),
                raw_completion: result.text,
                finish_reason: result.finish_reason,
                attempt_count: result.attempts,
            }),
            Err(err) => RunEntry::Failed(SampleFailure {
                sample_id: sample_id.to_string(),
                prompt_text: prompt.to_string(),
                attempt_count: failure_attempts(&err),
                error: err.to_string(),
            }),
        }
    }
}

fn failure_attempts(err: &BackendError) -> u32 {
    err.attempts().unwrap_or(1)
}
