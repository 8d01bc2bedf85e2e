//! Reference-based and ranker-based scoring of generated responses.
//!
//! BERTScore here is plain greedy matching over unit token vectors: precision
//! averages, over candidate tokens, the best cosine similarity to any reference
//! token; recall does the same from the reference side. No IDF weighting and
//! no baseline rescaling are applied.

mod report;

use std::collections::HashMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backends::{
    embed_tokens, score_response, BackendError, EmbeddingProvider, RankerBackend, RankerScores,
    Retrier,
};
use crate::corpus::Corpus;
use crate::parallel::parallel_map;
use crate::runner::{RunArtifact, RunEntry};

pub use report::{parse_csv_report, render_report, ReportFormat, ReportRow};

pub const REPORT_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("token list is empty")]
    EmptyTokenList,
    #[error("text is empty")]
    EmptyText,
    #[error("invalid ensemble weights: {0}")]
    InvalidWeights(String),
    #[error("run sample '{0}' has no entry in the reference corpus")]
    ReferenceMismatch(String),
    #[error("reference corpus sample '{0}' has no reference response")]
    MissingReference(String),
    #[error("malformed report csv: {0}")]
    MalformedReport(String),
    #[error("scoring sample '{sample_id}' failed: {source}")]
    Backend {
        sample_id: String,
        #[source]
        source: BackendError,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BertScoreResult {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl BertScoreResult {
    pub fn from_precision_recall(precision: f64, recall: f64) -> Self {
        let f1 = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };
        Self {
            precision,
            recall,
            f1,
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Greedy matching of unit vectors. Row and column maxima of the similarity
/// matrix are accumulated in one pass without materializing the matrix.
pub fn greedy_scores(candidate: &[Vec<f64>], reference: &[Vec<f64>]) -> Result<BertScoreResult, MetricsError> {
    if candidate.is_empty() || reference.is_empty() {
        return Err(MetricsError::EmptyTokenList);
    }
    let mut best_for_reference = vec![f64::NEG_INFINITY; reference.len()];
    let mut precision_sum = 0.0;
    for c in candidate {
        let mut best = f64::NEG_INFINITY;
        for (r, slot) in reference.iter().zip(best_for_reference.iter_mut()) {
            let sim = dot(c, r);
            best = best.max(sim);
            *slot = slot.max(sim);
        }
        precision_sum += best;
    }
    let precision = precision_sum / candidate.len() as f64;
    let recall = best_for_reference.iter().sum::<f64>() / reference.len() as f64;
    Ok(BertScoreResult::from_precision_recall(precision, recall))
}

pub fn bertscore(
    provider: &dyn EmbeddingProvider,
    retrier: &Retrier,
    candidate: &str,
    reference: &str,
) -> Result<BertScoreResult, MetricsError> {
    if candidate.trim().is_empty() || reference.trim().is_empty() {
        return Err(MetricsError::EmptyText);
    }
    let embed = |text: &str| -> Result<Vec<Vec<f64>>, MetricsError> {
        let tokens = embed_tokens(provider, retrier, text).map_err(|e| match e {
            BackendError::EmptyText => MetricsError::EmptyText,
            other => MetricsError::Backend {
                sample_id: String::new(),
                source: other,
            },
        })?;
        Ok(tokens.into_iter().map(|t| t.vector).collect())
    };
    greedy_scores(&embed(candidate)?, &embed(reference)?)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnsembleForm {
    /// `updown * human_vs_rand * human_vs_machine`
    #[default]
    Product,
    /// Weighted sum with weights in (updown, human_vs_rand, human_vs_machine) order.
    WeightedArithmetic,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EnsembleWeights {
    pub form: EnsembleForm,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weights: Option<[f64; 3]>,
}

impl EnsembleWeights {
    pub fn product() -> Self {
        Self::default()
    }

    pub fn arithmetic(weights: [f64; 3]) -> Result<Self, MetricsError> {
        let w = Self {
            form: EnsembleForm::WeightedArithmetic,
            weights: Some(weights),
        };
        w.validate()?;
        Ok(w)
    }

    pub fn validate(&self) -> Result<(), MetricsError> {
        match self.form {
            EnsembleForm::Product => Ok(()),
            EnsembleForm::WeightedArithmetic => {
                let w = self
                    .weights
                    .ok_or_else(|| MetricsError::InvalidWeights("arithmetic form needs weights".into()))?;
                if w.iter().any(|x| !x.is_finite() || *x < 0.0) {
                    return Err(MetricsError::InvalidWeights(format!("{w:?} has a negative entry")));
                }
                let sum: f64 = w.iter().sum();
                if (sum - 1.0).abs() > 1e-9 {
                    return Err(MetricsError::InvalidWeights(format!("{w:?} sums to {sum}")));
                }
                Ok(())
            }
        }
    }
}

pub fn ensemble(scores: &RankerScores, weights: &EnsembleWeights) -> Result<f64, MetricsError> {
    weights.validate()?;
    scores
        .validate()
        .map_err(|e| MetricsError::InvalidWeights(format!("invalid ranker scores: {e}")))?;
    let s = [scores.updown, scores.human_vs_rand, scores.human_vs_machine];
    let value = match weights.form {
        EnsembleForm::Product => s.iter().product(),
        EnsembleForm::WeightedArithmetic => {
            let w = weights.weights.expect("validated");
            s.iter().zip(w).map(|(x, w)| x * w).sum::<f64>()
        }
    };
    Ok(value.clamp(0.0, 1.0))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleScore {
    pub sample_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bertscore: Option<BertScoreResult>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ranker: Option<RankerScores>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ensemble: Option<f64>,
    /// Why the sample was not scored, if it was not.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub skipped: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub schema_version: u32,
    pub run_id: String,
    pub label: String,
    pub embedding_provider: String,
    #[serde(default)]
    pub ranker: Option<String>,
    pub ensemble: EnsembleWeights,
    pub bert_precision: Option<f64>,
    pub bert_recall: Option<f64>,
    pub bert_f1: Option<f64>,
    pub updown_avg: Option<f64>,
    pub human_vs_rand_avg: Option<f64>,
    pub human_vs_machine_avg: Option<f64>,
    pub final_avg: Option<f64>,
    pub final_best: Option<f64>,
    pub n_scored: usize,
    pub n_skipped: usize,
    pub samples: Vec<SampleScore>,
}

fn mean(values: impl Iterator<Item = f64>) -> Option<f64> {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| sum / n as f64)
}

/// Scoring backends and the ensemble used by [`evaluate_run`].
pub struct Evaluator<'a> {
    pub provider: &'a dyn EmbeddingProvider,
    pub ranker: Option<&'a dyn RankerBackend>,
    pub weights: EnsembleWeights,
    pub retrier: &'a Retrier,
    pub workers: usize,
}

/// Scores every response of `run` against `references`.
///
/// Failed generations and responses that are empty after cleanup are skipped
/// and counted in `n_skipped`; they never contribute zeros to the means.
/// `final_avg` is the mean of per-sample ensemble values, `final_best` their
/// maximum.
pub fn evaluate_run(
    run: &RunArtifact,
    references: &Corpus,
    evaluator: &Evaluator<'_>,
    label: impl Into<String>,
) -> Result<MetricReport, MetricsError> {
    evaluator.weights.validate()?;
    let by_id: HashMap<&str, _> = references.samples.iter().map(|s| (s.id.as_str(), s)).collect();
    for entry in &run.entries {
        let sample = by_id
            .get(entry.sample_id())
            .ok_or_else(|| MetricsError::ReferenceMismatch(entry.sample_id().to_string()))?;
        if sample.reference_response.is_none() {
            return Err(MetricsError::MissingReference(sample.id.clone()));
        }
    }

    let scored = parallel_map(&run.entries, evaluator.workers, |entry| -> Result<SampleScore, MetricsError> {
        let sample_id = entry.sample_id().to_string();
        let response = match entry {
            RunEntry::Failed(_) => {
                return Ok(SampleScore {
                    sample_id,
                    bertscore: None,
                    ranker: None,
                    ensemble: None,
                    skipped: Some("generation failed".into()),
                })
            }
            RunEntry::Ok(r) if r.cleaned_response.trim().is_empty() => {
                return Ok(SampleScore {
                    sample_id,
                    bertscore: None,
                    ranker: None,
                    ensemble: None,
                    skipped: Some("empty response".into()),
                })
            }
            RunEntry::Ok(r) => r.cleaned_response.as_str(),
        };
        let sample = by_id[sample_id.as_str()];
        let reference = sample.reference_response.as_deref().expect("checked above");
        let with_id = |e: MetricsError| match e {
            MetricsError::Backend { source, .. } => MetricsError::Backend {
                sample_id: sample_id.clone(),
                source,
            },
            other => other,
        };

        let bert = match bertscore(evaluator.provider, evaluator.retrier, response, reference) {
            Ok(b) => b,
            // tokenizer produced nothing for the response (e.g. only punctuation)
            Err(MetricsError::EmptyText) => {
                return Ok(SampleScore {
                    sample_id,
                    bertscore: None,
                    ranker: None,
                    ensemble: None,
                    skipped: Some("no tokens".into()),
                })
            }
            Err(e) => return Err(with_id(e)),
        };
        let (ranker, ens) = match evaluator.ranker {
            Some(ranker) => {
                let scores = score_response(ranker, evaluator.retrier, &sample.utterances, response)
                    .map_err(|source| MetricsError::Backend {
                        sample_id: sample_id.clone(),
                        source,
                    })?;
                (Some(scores), Some(ensemble(&scores, &evaluator.weights)?))
            }
            None => (None, None),
        };
        Ok(SampleScore {
            sample_id,
            bertscore: Some(bert),
            ranker,
            ensemble: ens,
            skipped: None,
        })
    });
    let samples = scored.into_iter().collect::<Result<Vec<_>, _>>()?;

    let bert: Vec<BertScoreResult> = samples.iter().filter_map(|s| s.bertscore).collect();
    let ranks: Vec<RankerScores> = samples.iter().filter_map(|s| s.ranker).collect();
    let ensembles: Vec<f64> = samples.iter().filter_map(|s| s.ensemble).collect();
    let n_scored = bert.len();

    Ok(MetricReport {
        schema_version: REPORT_SCHEMA_VERSION,
        run_id: run.run_id.clone(),
        label: label.into(),
        embedding_provider: evaluator.provider.name().to_string(),
        ranker: evaluator.ranker.map(|r| r.name().to_string()),
        ensemble: evaluator.weights.clone(),
        bert_precision: mean(bert.iter().map(|b| b.precision)),
        bert_recall: mean(bert.iter().map(|b| b.recall)),
        bert_f1: mean(bert.iter().map(|b| b.f1)),
        updown_avg: mean(ranks.iter().map(|r| r.updown)),
        human_vs_rand_avg: mean(ranks.iter().map(|r| r.human_vs_rand)),
        human_vs_machine_avg: mean(ranks.iter().map(|r| r.human_vs_machine)),
        final_avg: mean(ensembles.iter().copied()),
        final_best: ensembles.iter().copied().reduce(f64::max),
        n_scored,
        n_skipped: samples.len() - n_scored,
        samples,
    })
}
