//! Config file loading. Relative paths resolve against the config file's
//! directory.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use tutorbench_core::backends::{GenerationParams, RetryPolicy};
use tutorbench_core::metrics::EnsembleWeights;
use tutorbench_core::promptkit::{ExemplarChoice, ExemplarFilter, TemplateId};
use tutorbench_core::runner::FinetunePromptStyle;

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum ModeName {
    ZeroShot,
    FewShot,
    #[value(name = "finetuned")]
    #[serde(alias = "finetuned")]
    FineTuned,
}

/// Which corpus a command runs over. `Internal` is the seeded sample drawn
/// from the training split with the exemplars excluded.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum SplitName {
    Train,
    Dev,
    Test,
    Internal,
}

impl SplitName {
    pub fn as_str(self) -> &'static str {
        match self {
            SplitName::Train => "train",
            SplitName::Dev => "dev",
            SplitName::Test => "test",
            SplitName::Internal => "internal",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "train" => Some(SplitName::Train),
            "dev" => Some(SplitName::Dev),
            "test" => Some(SplitName::Test),
            "internal" => Some(SplitName::Internal),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorpusSection {
    pub train: Option<PathBuf>,
    pub dev: Option<PathBuf>,
    pub test: Option<PathBuf>,
    #[serde(default = "default_internal_size")]
    pub internal_test_size: usize,
    #[serde(default = "default_internal_seed")]
    pub internal_test_seed: u64,
}

fn default_internal_size() -> usize {
    50
}

fn default_internal_seed() -> u64 {
    7
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSection {
    pub mode: ModeName,
    #[serde(default = "default_template")]
    pub template: TemplateId,
    pub exemplars: Option<ExemplarChoice>,
    pub finetuned_model: Option<String>,
    #[serde(default)]
    pub finetune_prompt_style: FinetunePromptStyle,
    #[serde(default = "default_eval_split")]
    pub eval_split: SplitName,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_workers")]
    pub workers: usize,
}

fn default_template() -> TemplateId {
    TemplateId::A
}

fn default_eval_split() -> SplitName {
    SplitName::Internal
}

fn default_workers() -> usize {
    4
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BackendSection {
    #[serde(default = "default_base_url")]
    pub base_url: String,
    #[serde(default = "default_embedding_model")]
    pub embedding_model: String,
    /// Companion scoring service; without it ranker columns stay empty.
    pub ranker_url: Option<String>,
    #[serde(default = "default_timeout")]
    pub timeout_secs: u64,
    #[serde(default)]
    pub mock_seed: u64,
}

impl Default for BackendSection {
    fn default() -> Self {
        Self {
            base_url: default_base_url(),
            embedding_model: default_embedding_model(),
            ranker_url: None,
            timeout_secs: default_timeout(),
            mock_seed: 0,
        }
    }
}

fn default_base_url() -> String {
    "https://api.openai.com/v1".into()
}

fn default_embedding_model() -> String {
    "text-embedding-ada-002".into()
}

fn default_timeout() -> u64 {
    60
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetricsSection {
    #[serde(default)]
    pub ensemble: EnsembleWeights,
    #[serde(default = "default_workers")]
    pub workers: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    #[serde(default = "default_runs")]
    pub runs_dir: PathBuf,
    #[serde(default = "default_reports")]
    pub reports_dir: PathBuf,
    #[serde(default = "default_export")]
    pub export_dir: PathBuf,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self {
            runs_dir: default_runs(),
            reports_dir: default_reports(),
            export_dir: default_export(),
        }
    }
}

fn default_runs() -> PathBuf {
    "runs".into()
}

fn default_reports() -> PathBuf {
    "reports".into()
}

fn default_export() -> PathBuf {
    "export".into()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FinetuneSection {
    #[serde(default = "default_holdout")]
    pub holdout_fraction: f64,
    #[serde(default = "default_finetune_seed")]
    pub seed: u64,
}

impl Default for FinetuneSection {
    fn default() -> Self {
        Self {
            holdout_fraction: default_holdout(),
            seed: default_finetune_seed(),
        }
    }
}

fn default_holdout() -> f64 {
    0.05
}

fn default_finetune_seed() -> u64 {
    3
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CliConfig {
    pub corpus: CorpusSection,
    pub experiment: ExperimentSection,
    /// Replaces the bundled filter when given.
    pub exemplar_filter: Option<ExemplarFilter>,
    #[serde(default)]
    pub generation: GenerationParams,
    #[serde(default)]
    pub backend: BackendSection,
    #[serde(default)]
    pub retry: RetryPolicy,
    #[serde(default)]
    pub metrics: MetricsSection,
    #[serde(default)]
    pub output: OutputSection,
    #[serde(default)]
    pub finetune: FinetuneSection,
}

impl CliConfig {
    /// Parses TOML, or JSON when the file name ends in `.json`.
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::config(format!("cannot read config {}: {e}", path.display())))?;
        let mut config: CliConfig = if path.extension().is_some_and(|e| e == "json") {
            serde_json::from_str(&text).map_err(|e| CliError::config(format!("{}: {e}", path.display())))?
        } else {
            toml::from_str(&text).map_err(|e| CliError::config(format!("{}: {e}", path.display())))?
        };
        let base = path.parent().unwrap_or(Path::new("."));
        config.resolve_paths(base);
        config.check_paths()?;
        Ok(config)
    }

    fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        for p in [&mut self.corpus.train, &mut self.corpus.dev, &mut self.corpus.test]
            .into_iter()
            .flatten()
        {
            fix(p);
        }
        fix(&mut self.output.runs_dir);
        fix(&mut self.output.reports_dir);
        fix(&mut self.output.export_dir);
    }

    fn check_paths(&self) -> Result<(), CliError> {
        for (name, p) in [
            ("corpus.train", &self.corpus.train),
            ("corpus.dev", &self.corpus.dev),
            ("corpus.test", &self.corpus.test),
        ] {
            if let Some(p) = p {
                if !p.is_file() {
                    return Err(CliError::config(format!("{name}: {} does not exist", p.display())));
                }
            }
        }
        Ok(())
    }

    pub fn split_path(&self, split: SplitName) -> Result<&Path, CliError> {
        let (name, path) = match split {
            SplitName::Train | SplitName::Internal => ("train", &self.corpus.train),
            SplitName::Dev => ("dev", &self.corpus.dev),
            SplitName::Test => ("test", &self.corpus.test),
        };
        path.as_deref()
            .ok_or_else(|| CliError::config(format!("corpus.{name} is not configured")))
    }
}
