use std::collections::HashSet;
use std::fs;
use std::io::Write;
use std::path::Path;
use std::sync::Arc;
use std::time::Duration;

use tutorbench_core::backends::{
    api_key_from_env, export_finetune_dataset, CompletionBackend, EmbeddingProvider, HttpCompletionBackend,
    HttpConfig, HttpEmbeddingProvider, HttpRanker, MockCompletion, MockEmbedding, MockRanker, RankerBackend,
    Retrier,
};
use tutorbench_core::corpus::{
    corpus_stats, load_corpus, sample_internal_test, split_for_finetune, Corpus, CorpusError, Split,
};
use tutorbench_core::metrics::{
    evaluate_run, render_report, Evaluator, MetricReport, MetricsError, ReportFormat,
};
use tutorbench_core::promptkit::{select_exemplars, ExemplarFilter, ExemplarSet, TemplateId};
use tutorbench_core::runner::{ExperimentConfig, GenerationMode, RunError, RunStore, Runner};

use crate::config::{CliConfig, ModeName, SplitName};
use crate::{CliError, ExperimentOverrides};

pub const RESOLVED_CONFIG_FILE: &str = "resolved_config.json";

type CmdResult = Result<(), CliError>;

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |e| CliError::data(format!("{}: {e}", path.display()))
}

fn write_out(out: &mut dyn Write, text: &str) -> CmdResult {
    out.write_all(text.as_bytes())
        .map_err(|e| CliError::data(format!("stdout: {e}")))
}

fn corpus_err(e: CorpusError) -> CliError {
    CliError::data(e)
}

fn run_err(e: RunError) -> CliError {
    match e {
        RunError::Config(_) | RunError::Prompt(_) => CliError::config(e),
        RunError::UnknownRun(_) | RunError::CorruptArtifact { .. } => CliError::eval(e),
        RunError::Persistence { .. } => CliError::data(e),
    }
}

pub struct Context {
    config: CliConfig,
    mock: bool,
}

impl Context {
    pub fn new(config: CliConfig, mock: bool) -> Self {
        Self { config, mock }
    }

    fn retrier(&self) -> Result<Arc<Retrier>, CliError> {
        self.config.retry.validate().map_err(CliError::config)?;
        Ok(Arc::new(Retrier::new(self.config.retry.clone())))
    }

    fn http(&self) -> HttpConfig {
        HttpConfig {
            base_url: self.config.backend.base_url.clone(),
            api_key: api_key_from_env(),
            timeout: Duration::from_secs(self.config.backend.timeout_secs),
        }
    }

    fn backend_id(&self) -> String {
        if self.mock {
            format!("mock:{}", self.config.backend.mock_seed)
        } else {
            format!("openai-compatible:{}", self.config.backend.base_url)
        }
    }

    fn completion_backend(&self) -> Result<Arc<dyn CompletionBackend>, CliError> {
        if self.mock {
            return Ok(Arc::new(MockCompletion::new(self.config.backend.mock_seed)));
        }
        Ok(Arc::new(HttpCompletionBackend::new(self.http()).map_err(CliError::config)?))
    }

    fn embedding_provider(&self) -> Result<Box<dyn EmbeddingProvider>, CliError> {
        if self.mock {
            return Ok(Box::new(MockEmbedding::new(self.config.backend.mock_seed)));
        }
        let p = HttpEmbeddingProvider::new(self.http(), self.config.backend.embedding_model.clone())
            .map_err(CliError::config)?;
        Ok(Box::new(p))
    }

    fn ranker(&self) -> Result<Option<Box<dyn RankerBackend>>, CliError> {
        if self.mock {
            return Ok(Some(Box::new(MockRanker::new())));
        }
        let Some(url) = &self.config.backend.ranker_url else {
            return Ok(None);
        };
        let cfg = HttpConfig {
            base_url: url.clone(),
            ..self.http()
        };
        Ok(Some(Box::new(HttpRanker::new(cfg).map_err(CliError::config)?)))
    }

    fn filter(&self) -> ExemplarFilter {
        self.config.exemplar_filter.clone().unwrap_or_default()
    }

    fn load_file(&self, split: SplitName) -> Result<Corpus, CliError> {
        let path = self.config.split_path(split)?;
        let tag = match split {
            SplitName::Train | SplitName::Internal => Split::Train,
            SplitName::Dev => Split::Dev,
            SplitName::Test => Split::Test,
        };
        load_corpus(path, tag).map_err(corpus_err)
    }

    /// Ids of the configured exemplar choice, resolved against the training
    /// split. Used both for prompts and for keeping the internal test set
    /// disjoint from the exemplars.
    fn exemplar_set(&self, train: &Corpus) -> Result<ExemplarSet, CliError> {
        match &self.config.experiment.exemplars {
            None => Ok(ExemplarSet::empty()),
            Some(choice) => select_exemplars(train, choice, &self.filter())
                .map_err(CliError::config),
        }
    }

    fn load_split(&self, split: SplitName) -> Result<Corpus, CliError> {
        if split != SplitName::Internal {
            return self.load_file(split);
        }
        let train = self.load_file(SplitName::Train)?;
        let exclude: HashSet<String> = self.exemplar_set(&train)?.ids().into_iter().collect();
        sample_internal_test(
            &train,
            self.config.corpus.internal_test_size,
            self.config.corpus.internal_test_seed,
            &exclude,
        )
        .map_err(corpus_err)
    }

    fn experiment(&self, o: &ExperimentOverrides) -> Result<(ExperimentConfig, SplitName, usize), CliError> {
        let e = &self.config.experiment;
        let mode_name = o
            .mode
            .or(o.model.as_ref().map(|_| ModeName::FineTuned))
            .unwrap_or(e.mode);
        let mode = match mode_name {
            ModeName::ZeroShot => GenerationMode::ZeroShot,
            ModeName::FewShot => GenerationMode::FewShot,
            ModeName::FineTuned => {
                let model = o
                    .model
                    .clone()
                    .or_else(|| e.finetuned_model.clone())
                    .ok_or_else(|| CliError::config("fine-tuned mode needs --model or experiment.finetuned_model"))?;
                GenerationMode::FineTuned { model }
            }
        };
        let exemplars = match mode {
            GenerationMode::ZeroShot => None,
            _ => e.exemplars.clone(),
        };
        let mut params = self.config.generation.clone();
        if let Some(t) = o.temperature {
            params.temperature = t;
        }
        if let Some(m) = o.max_tokens {
            params.max_tokens = m;
        }
        let split = o.split.unwrap_or(e.eval_split);
        let config = ExperimentConfig {
            mode,
            template: o.template.unwrap_or(e.template),
            exemplars,
            exemplar_filter: self.filter(),
            params,
            backend: self.backend_id(),
            corpus: split.as_str().to_string(),
            seed: o.seed.unwrap_or(e.seed),
            finetune_prompt_style: e.finetune_prompt_style,
            finetune_serialization: Default::default(),
        };
        config.validate().map_err(run_err)?;
        Ok((config, split, o.workers.unwrap_or(e.workers)))
    }

    pub fn stats(&self, split: SplitName, json: bool, out: &mut dyn Write) -> CmdResult {
        let corpus = self.load_split(split)?;
        let stats = corpus_stats(&corpus).map_err(corpus_err)?;
        let table = stats.render_table();
        let mut json_text = serde_json::to_string_pretty(&stats).expect("stats serialize");
        json_text.push('\n');

        let dir = &self.config.output.reports_dir;
        fs::create_dir_all(dir).map_err(io_err(dir))?;
        let stem = format!("stats-{}", split.as_str());
        let txt = dir.join(format!("{stem}.txt"));
        fs::write(&txt, &table).map_err(io_err(&txt))?;
        let js = dir.join(format!("{stem}.json"));
        fs::write(&js, &json_text).map_err(io_err(&js))?;

        write_out(out, if json { &json_text } else { &table })
    }

    pub fn prompt(
        &self,
        sample_id: &str,
        template: Option<TemplateId>,
        zero_shot: bool,
        out: &mut dyn Write,
    ) -> CmdResult {
        let overrides = ExperimentOverrides {
            template,
            mode: zero_shot.then_some(ModeName::ZeroShot),
            ..Default::default()
        };
        let (config, _, _) = self.experiment(&overrides)?;
        let mut sample = None;
        for split in [SplitName::Train, SplitName::Dev, SplitName::Test] {
            if self.config.split_path(split).is_err() {
                continue;
            }
            if let Some(s) = self.load_file(split)?.get(sample_id) {
                sample = Some(s.clone());
                break;
            }
        }
        let sample = sample.ok_or_else(|| CliError::data(format!("unknown sample '{sample_id}'")))?;
        let exemplars = match &config.exemplars {
            Some(_) => config
                .resolve_exemplars(&self.load_file(SplitName::Train)?)
                .map_err(run_err)?,
            None => ExemplarSet::empty(),
        };
        let text = config.build_prompt(&exemplars, &sample).map_err(run_err)?;
        write_out(out, &text)
    }

    pub fn exemplars(&self, out: &mut dyn Write) -> CmdResult {
        let train = self.load_file(SplitName::Train)?;
        let set = self.exemplar_set(&train)?;
        if set.is_empty() {
            return write_out(out, "no exemplars configured\n");
        }
        let filter = self.filter();
        let mut text = String::new();
        for e in set.exemplars() {
            let reference = e.reference_response.as_deref().unwrap_or("");
            let cue = if filter.has_teaching_cue(reference) { "cue" } else { "-" };
            text.push_str(&format!("{}\t{}\t{}\t{}\n", e.id, e.utterances.len(), cue, reference));
        }
        write_out(out, &text)
    }

    pub fn generate(&self, overrides: &ExperimentOverrides, out: &mut dyn Write) -> CmdResult {
        let (config, split, workers) = self.experiment(overrides)?;
        let corpus = self.load_split(split)?;
        let pool = match config.exemplars {
            Some(_) => self.load_file(SplitName::Train)?,
            None => Corpus::new(Split::Train, Vec::new()).expect("empty corpus is valid"),
        };
        let store = RunStore::new(&self.config.output.runs_dir);
        let runner = Runner::new(self.completion_backend()?, self.retrier()?, store).with_workers(workers);
        let run = runner.run(&config, &corpus, &pool).map_err(run_err)?;

        let path = runner.store().run_dir(&run.run_id).join(RESOLVED_CONFIG_FILE);
        let mut snapshot = serde_json::to_string_pretty(&self.config).expect("config serializes");
        snapshot.push('\n');
        fs::write(&path, snapshot).map_err(io_err(&path))?;

        write_out(
            out,
            &format!(
                "{}\t{} responses\t{} failures\n",
                run.run_id,
                run.responses().count(),
                run.failures().count()
            ),
        )
    }

    fn default_label(config: &ExperimentConfig) -> String {
        let params = config.effective_params();
        match &config.mode {
            GenerationMode::ZeroShot => format!("Zero-Shot {} {}", config.template, params.model),
            GenerationMode::FewShot => format!("Few-Shot {} {}", config.template, params.model),
            GenerationMode::FineTuned { model } => format!("Fine-Tuned {model}"),
        }
    }

    pub fn evaluate(&self, run_id: &str, label: Option<String>, out: &mut dyn Write) -> CmdResult {
        let store = RunStore::new(&self.config.output.runs_dir);
        let run = store.load(run_id).map_err(run_err)?;
        let split = SplitName::parse(&run.config.corpus)
            .ok_or_else(|| CliError::eval(format!("run corpus '{}' is not a known split", run.config.corpus)))?;
        let references = match split {
            SplitName::Internal => self.load_file(SplitName::Train),
            other => self.load_file(other),
        }
        .map_err(|e| CliError::eval(e.message))?;

        let provider = self.embedding_provider()?;
        let ranker = self.ranker()?;
        let retrier = self.retrier()?;
        self.config.metrics.ensemble.validate().map_err(CliError::config)?;
        let evaluator = Evaluator {
            provider: provider.as_ref(),
            ranker: ranker.as_deref(),
            weights: self.config.metrics.ensemble.clone(),
            retrier: &retrier,
            workers: self.config.metrics.workers,
        };
        let label = label.unwrap_or_else(|| Self::default_label(&run.config));
        let report = evaluate_run(&run, &references, &evaluator, label).map_err(|e| match e {
            MetricsError::InvalidWeights(_) => CliError::config(e),
            other => CliError::eval(other),
        })?;

        let dir = &self.config.output.reports_dir;
        fs::create_dir_all(dir).map_err(io_err(dir))?;
        for format in ReportFormat::ALL {
            let path = dir.join(format!("{run_id}.{}", format.extension()));
            fs::write(&path, render_report(std::slice::from_ref(&report), format)).map_err(io_err(&path))?;
        }
        write_out(out, &render_report(&[report], ReportFormat::Markdown))
    }

    pub fn export_finetune(&self, fraction: Option<f64>, seed: Option<u64>, out: &mut dyn Write) -> CmdResult {
        let train = self.load_file(SplitName::Train)?;
        let fraction = fraction.unwrap_or(self.config.finetune.holdout_fraction);
        let seed = seed.unwrap_or(self.config.finetune.seed);
        let (fit, holdout) = split_for_finetune(&train, fraction, seed).map_err(|e| match e {
            CorpusError::InvalidFraction(_) => CliError::config(e),
            other => corpus_err(other),
        })?;
        let jsonl = export_finetune_dataset(&fit, &Default::default()).map_err(corpus_err)?;

        let dir = &self.config.output.export_dir;
        fs::create_dir_all(dir).map_err(io_err(dir))?;
        let train_path = dir.join("finetune_train.jsonl");
        fs::write(&train_path, jsonl).map_err(io_err(&train_path))?;
        let holdout_path = dir.join("holdout.jsonl");
        holdout.write_jsonl(&holdout_path).map_err(corpus_err)?;
        write_out(
            out,
            &format!(
                "{}\t{} records\n{}\t{} records\n",
                train_path.display(),
                fit.len(),
                holdout_path.display(),
                holdout.len()
            ),
        )
    }

    pub fn report(&self, run_ids: &[String], format: ReportFormat, out: &mut dyn Write) -> CmdResult {
        let dir = &self.config.output.reports_dir;
        let mut ids = run_ids.to_vec();
        if ids.is_empty() {
            let entries = fs::read_dir(dir).map_err(io_err(dir))?;
            for entry in entries {
                let path = entry.map_err(io_err(dir))?.path();
                let is_report = path.extension().is_some_and(|e| e == "json")
                    && !path.file_name().is_some_and(|n| n.to_string_lossy().starts_with("stats-"));
                if is_report {
                    ids.push(path.file_stem().unwrap().to_string_lossy().into_owned());
                }
            }
            ids.sort();
        }
        if ids.is_empty() {
            return Err(CliError::eval("no reports found; run `evaluate` first"));
        }
        let mut reports = Vec::with_capacity(ids.len());
        for id in &ids {
            let path = dir.join(format!("{id}.json"));
            let text = fs::read_to_string(&path).map_err(|e| CliError::eval(format!("{}: {e}", path.display())))?;
            let doc: serde_json::Value =
                serde_json::from_str(&text).map_err(|e| CliError::eval(format!("{}: {e}", path.display())))?;
            let batch: Vec<MetricReport> = serde_json::from_value(doc["reports"].clone())
                .map_err(|e| CliError::eval(format!("{}: {e}", path.display())))?;
            reports.extend(batch);
        }
        write_out(out, &render_report(&reports, format))
    }

    pub fn runs(&self, out: &mut dyn Write) -> CmdResult {
        let store = RunStore::new(&self.config.output.runs_dir);
        let runs = store.list().map_err(run_err)?;
        let mut text = String::new();
        for r in runs {
            let mode = match r.mode {
                GenerationMode::ZeroShot => "zero-shot".to_string(),
                GenerationMode::FewShot => "few-shot".to_string(),
                GenerationMode::FineTuned { .. } => "finetuned".to_string(),
            };
            text.push_str(&format!(
                "{}\t{}\t{}\t{}\t{}\t{}/{}\t{}\n",
                r.run_id,
                r.started_at.format("%Y-%m-%dT%H:%M:%SZ"),
                mode,
                r.template,
                r.model,
                r.n_responses,
                r.n_responses + r.n_failures,
                r.corpus
            ));
        }
        write_out(out, &text)
    }
}
