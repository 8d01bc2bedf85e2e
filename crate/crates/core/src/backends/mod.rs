//! Completion, token-embedding and response-ranking backends.
//!
//! Every backend is a plain synchronous trait object so callers can share one
//! client across worker threads. Retry, backoff and the in-flight cap live in
//! [`Retrier`]; backends themselves make exactly one attempt per call.

mod fault;
mod finetune;
mod http;
mod mock;
mod retry;

use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::Turn;

pub use fault::{FaultPlan, FaultyCompletion, FaultyRanker};
pub use finetune::{
    export_finetune_dataset, finetune_prompt, finetune_record, FinetuneRecord, FinetuneSerialization,
};
pub use http::{
    api_key_from_env, HttpCompletionBackend, HttpConfig, HttpEmbeddingProvider, HttpRanker,
    API_KEY_ENV, API_KEY_FALLBACK_ENV,
};
pub use mock::{MockCompletion, MockEmbedding, MockRanker, MOCK_EMBEDDING_DIM};
pub use retry::{ConcurrencyLimiter, Permit, RetryPolicy, Retrier, Sleeper, ThreadSleeper};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TransientKind {
    Throttled,
    Timeout,
    Server(u16),
    Connection,
}

#[derive(Debug, Clone, Error, PartialEq)]
pub enum BackendError {
    #[error("transient backend failure ({kind:?}): {message}")]
    Transient { kind: TransientKind, message: String },
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("authentication failed: {0}")]
    Auth(String),
    #[error("unexpected backend response: {0}")]
    Protocol(String),
    #[error("backend unavailable after {attempts} attempts: {last}")]
    Unavailable { attempts: u32, last: String },
    #[error("text is empty")]
    EmptyText,
}

impl BackendError {
    pub fn throttled(message: impl Into<String>) -> Self {
        BackendError::Transient {
            kind: TransientKind::Throttled,
            message: message.into(),
        }
    }

    pub fn is_transient(&self) -> bool {
        matches!(self, BackendError::Transient { .. })
    }

    /// Attempts spent before the error surfaced, when known.
    pub fn attempts(&self) -> Option<u32> {
        match self {
            BackendError::Unavailable { attempts, .. } => Some(*attempts),
            _ => None,
        }
    }
}

/// Decoding configuration sent with every completion request.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GenerationParams {
    pub model: String,
    pub temperature: f64,
    pub max_tokens: u32,
    pub top_p: f64,
    pub frequency_penalty: f64,
    pub presence_penalty: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stop: Option<Vec<String>>,
}

impl Default for GenerationParams {
    fn default() -> Self {
        Self {
            model: "text-davinci-003".to_string(),
            temperature: 0.7,
            max_tokens: 100,
            top_p: 0.8,
            frequency_penalty: 0.0,
            presence_penalty: 0.0,
            stop: None,
        }
    }
}

impl GenerationParams {
    pub fn validate(&self) -> Result<(), BackendError> {
        let bad = |msg: String| Err(BackendError::InvalidRequest(msg));
        if !(0.0..=2.0).contains(&self.temperature) {
            return bad(format!("temperature {} outside [0, 2]", self.temperature));
        }
        if self.max_tokens == 0 {
            return bad("max_tokens must be positive".into());
        }
        if !(self.top_p > 0.0 && self.top_p <= 1.0) {
            return bad(format!("top_p {} outside (0, 1]", self.top_p));
        }
        if !self.frequency_penalty.is_finite() || !self.presence_penalty.is_finite() {
            return bad("penalties must be finite".into());
        }
        if self.model.trim().is_empty() {
            return bad("model id is empty".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FinishReason {
    Stop,
    Length,
    Other,
}

impl FinishReason {
    pub fn from_wire(raw: Option<&str>) -> Self {
        match raw {
            Some("stop") => FinishReason::Stop,
            Some("length") => FinishReason::Length,
            _ => FinishReason::Other,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompletionResult {
    pub text: String,
    pub finish_reason: FinishReason,
    pub prompt_tokens: u32,
    pub completion_tokens: u32,
    pub latency_ms: u64,
    /// Filled in by [`complete`]; a bare backend call reports 1.
    pub attempts: u32,
}

/// Ranker probabilities for one (context, response) pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RankerScores {
    pub updown: f64,
    pub human_vs_rand: f64,
    pub human_vs_machine: f64,
}

impl RankerScores {
    pub fn new(updown: f64, human_vs_rand: f64, human_vs_machine: f64) -> Result<Self, BackendError> {
        let scores = Self {
            updown,
            human_vs_rand,
            human_vs_machine,
        };
        scores.validate()?;
        Ok(scores)
    }

    pub fn validate(&self) -> Result<(), BackendError> {
        for (name, v) in [
            ("updown", self.updown),
            ("human_vs_rand", self.human_vs_rand),
            ("human_vs_machine", self.human_vs_machine),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(BackendError::Protocol(format!("{name} score {v} outside [0, 1]")));
            }
        }
        Ok(())
    }
}

/// A token and its unit-normalized embedding.
#[derive(Debug, Clone, PartialEq)]
pub struct TokenEmbedding {
    pub token: String,
    pub vector: Vec<f64>,
}

pub trait CompletionBackend: Send + Sync {
    fn name(&self) -> &str;
    fn complete(&self, prompt: &str, params: &GenerationParams) -> Result<CompletionResult, BackendError>;
}

pub trait EmbeddingProvider: Send + Sync {
    fn name(&self) -> &str;
    fn embed_tokens(&self, text: &str) -> Result<Vec<TokenEmbedding>, BackendError>;
}

pub trait RankerBackend: Send + Sync {
    fn name(&self) -> &str;
    fn score(&self, context: &[Turn], response: &str) -> Result<RankerScores, BackendError>;
}

/// Sends one prompt through `retrier`, validating inputs first.
pub fn complete(
    backend: &dyn CompletionBackend,
    retrier: &Retrier,
    prompt: &str,
    params: &GenerationParams,
) -> Result<CompletionResult, BackendError> {
    if prompt.is_empty() {
        return Err(BackendError::InvalidRequest("prompt is empty".into()));
    }
    params.validate()?;
    let (mut result, attempts) = retrier.call(|| backend.complete(prompt, params))?;
    result.attempts = attempts;
    Ok(result)
}

pub fn embed_tokens(
    provider: &dyn EmbeddingProvider,
    retrier: &Retrier,
    text: &str,
) -> Result<Vec<TokenEmbedding>, BackendError> {
    if text.trim().is_empty() {
        return Err(BackendError::EmptyText);
    }
    let (tokens, _) = retrier.call(|| provider.embed_tokens(text))?;
    Ok(tokens)
}

pub fn score_response(
    ranker: &dyn RankerBackend,
    retrier: &Retrier,
    context: &[Turn],
    response: &str,
) -> Result<RankerScores, BackendError> {
    if response.trim().is_empty() {
        return Err(BackendError::EmptyText);
    }
    let (scores, _) = retrier.call(|| ranker.score(context, response))?;
    scores.validate()?;
    Ok(scores)
}

/// Scales `v` to unit L2 norm; `None` for the zero vector.
pub fn normalize(mut v: Vec<f64>) -> Option<Vec<f64>> {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm == 0.0 || !norm.is_finite() {
        return None;
    }
    v.iter_mut().for_each(|x| *x /= norm);
    Some(v)
}

pub(crate) fn elapsed_ms(start: std::time::Instant) -> u64 {
    let d: Duration = start.elapsed();
    d.as_millis().min(u64::MAX as u128) as u64
}
