//! Clients for OpenAI-compatible completion/embedding endpoints and a small
//! companion ranking service.
//!
//! Wire formats:
//! - `POST {base}/completions` with `model`, `prompt`, `temperature`,
//!   `max_tokens`, `top_p`, `frequency_penalty`, `presence_penalty`, `stop`.
//! - `POST {base}/embeddings` with `input` (the whitespace tokens of the text,
//!   one embedding requested per token) and `model`.
//! - `POST {base}/score` with `context` (`[{role, text}]`) and `response`,
//!   answered by `{updown, human_vs_rand, human_vs_machine}`.

use std::time::{Duration, Instant};

use reqwest::blocking::{Client, Response};
use reqwest::StatusCode;
use serde::{Deserialize, Serialize};
use serde_json::json;

use super::{
    elapsed_ms, normalize, BackendError, CompletionBackend, CompletionResult, EmbeddingProvider,
    FinishReason, GenerationParams, RankerBackend, RankerScores, TokenEmbedding, TransientKind,
};
use crate::corpus::Turn;

pub const API_KEY_ENV: &str = "TUTORBENCH_API_KEY";
pub const API_KEY_FALLBACK_ENV: &str = "OPENAI_API_KEY";

pub fn api_key_from_env() -> Option<String> {
    [API_KEY_ENV, API_KEY_FALLBACK_ENV]
        .iter()
        .filter_map(|k| std::env::var(k).ok())
        .find(|v| !v.trim().is_empty())
}

#[derive(Debug, Clone)]
pub struct HttpConfig {
    pub base_url: String,
    pub api_key: Option<String>,
    pub timeout: Duration,
}

impl HttpConfig {
    pub fn new(base_url: impl Into<String>) -> Self {
        Self {
            base_url: base_url.into(),
            api_key: api_key_from_env(),
            timeout: Duration::from_secs(60),
        }
    }

    fn endpoint(&self, path: &str) -> String {
        format!("{}/{}", self.base_url.trim_end_matches('/'), path)
    }

    fn client(&self) -> Result<Client, BackendError> {
        Client::builder()
            .timeout(self.timeout)
            .build()
            .map_err(|e| BackendError::InvalidRequest(format!("cannot build HTTP client: {e}")))
    }

    fn post<T: Serialize>(&self, client: &Client, path: &str, body: &T) -> Result<Response, BackendError> {
        let mut req = client.post(self.endpoint(path)).json(body);
        if let Some(key) = &self.api_key {
            req = req.bearer_auth(key);
        }
        let resp = req.send().map_err(map_transport)?;
        check_status(resp)
    }
}

fn map_transport(e: reqwest::Error) -> BackendError {
    let kind = if e.is_timeout() {
        TransientKind::Timeout
    } else {
        TransientKind::Connection
    };
    BackendError::Transient {
        kind,
        message: e.to_string(),
    }
}

fn check_status(resp: Response) -> Result<Response, BackendError> {
    let status = resp.status();
    if status.is_success() {
        return Ok(resp);
    }
    let body = resp.text().unwrap_or_default();
    let message = format!("HTTP {}: {}", status.as_u16(), body.chars().take(300).collect::<String>());
    Err(match status {
        StatusCode::TOO_MANY_REQUESTS => BackendError::Transient {
            kind: TransientKind::Throttled,
            message,
        },
        StatusCode::REQUEST_TIMEOUT => BackendError::Transient {
            kind: TransientKind::Timeout,
            message,
        },
        StatusCode::UNAUTHORIZED | StatusCode::FORBIDDEN => BackendError::Auth(message),
        s if s.is_server_error() => BackendError::Transient {
            kind: TransientKind::Server(s.as_u16()),
            message,
        },
        _ => BackendError::InvalidRequest(message),
    })
}

fn parse_json<T: for<'de> Deserialize<'de>>(resp: Response) -> Result<T, BackendError> {
    let bytes = resp.bytes().map_err(map_transport)?;
    serde_json::from_slice(&bytes).map_err(|e| BackendError::Protocol(e.to_string()))
}

#[derive(Debug, Deserialize)]
struct CompletionChoice {
    text: String,
    finish_reason: Option<String>,
}

#[derive(Debug, Default, Deserialize)]
struct Usage {
    #[serde(default)]
    prompt_tokens: u32,
    #[serde(default)]
    completion_tokens: u32,
}

#[derive(Debug, Deserialize)]
struct CompletionResponse {
    choices: Vec<CompletionChoice>,
    #[serde(default)]
    usage: Usage,
}

pub struct HttpCompletionBackend {
    config: HttpConfig,
    client: Client,
}

impl HttpCompletionBackend {
    pub fn new(config: HttpConfig) -> Result<Self, BackendError> {
        let client = config.client()?;
        Ok(Self { config, client })
    }
}

impl CompletionBackend for HttpCompletionBackend {
    fn name(&self) -> &str {
        "openai-compatible"
    }

    fn complete(&self, prompt: &str, params: &GenerationParams) -> Result<CompletionResult, BackendError> {
        let start = Instant::now();
        let mut body = json!({
            "model": params.model,
            "prompt": prompt,
            "temperature": params.temperature,
            "max_tokens": params.max_tokens,
            "top_p": params.top_p,
            "frequency_penalty": params.frequency_penalty,
            "presence_penalty": params.presence_penalty,
        });
        if let Some(stop) = &params.stop {
            body["stop"] = json!(stop);
        }
        let resp = self.config.post(&self.client, "completions", &body)?;
        let parsed: CompletionResponse = parse_json(resp)?;
        let choice = parsed
            .choices
            .into_iter()
            .next()
            .ok_or_else(|| BackendError::Protocol("no choices in completion response".into()))?;
        Ok(CompletionResult {
            text: choice.text,
            finish_reason: FinishReason::from_wire(choice.finish_reason.as_deref()),
            prompt_tokens: parsed.usage.prompt_tokens,
            completion_tokens: parsed.usage.completion_tokens,
            latency_ms: elapsed_ms(start),
            attempts: 1,
        })
    }
}

#[derive(Debug, Deserialize)]
struct EmbeddingItem {
    #[serde(default)]
    index: Option<usize>,
    embedding: Vec<f64>,
}

#[derive(Debug, Deserialize)]
struct EmbeddingResponse {
    data: Vec<EmbeddingItem>,
}

pub struct HttpEmbeddingProvider {
    config: HttpConfig,
    model: String,
    client: Client,
}

impl HttpEmbeddingProvider {
    pub fn new(config: HttpConfig, model: impl Into<String>) -> Result<Self, BackendError> {
        let client = config.client()?;
        Ok(Self {
            config,
            model: model.into(),
            client,
        })
    }
}

impl EmbeddingProvider for HttpEmbeddingProvider {
    fn name(&self) -> &str {
        &self.model
    }

    fn embed_tokens(&self, text: &str) -> Result<Vec<TokenEmbedding>, BackendError> {
        let tokens: Vec<&str> = text.split_whitespace().collect();
        if tokens.is_empty() {
            return Err(BackendError::EmptyText);
        }
        let body = json!({ "input": tokens, "model": self.model });
        let resp = self.config.post(&self.client, "embeddings", &body)?;
        let mut parsed: EmbeddingResponse = parse_json(resp)?;
        if parsed.data.len() != tokens.len() {
            return Err(BackendError::Protocol(format!(
                "expected {} embeddings, got {}",
                tokens.len(),
                parsed.data.len()
            )));
        }
        if parsed.data.iter().all(|d| d.index.is_some()) {
            parsed.data.sort_by_key(|d| d.index);
        }
        tokens
            .into_iter()
            .zip(parsed.data)
            .map(|(token, item)| {
                let vector = normalize(item.embedding)
                    .ok_or_else(|| BackendError::Protocol(format!("zero embedding for '{token}'")))?;
                Ok(TokenEmbedding {
                    token: token.to_string(),
                    vector,
                })
            })
            .collect()
    }
}

pub struct HttpRanker {
    config: HttpConfig,
    client: Client,
}

impl HttpRanker {
    pub fn new(config: HttpConfig) -> Result<Self, BackendError> {
        let client = config.client()?;
        Ok(Self { config, client })
    }
}

impl RankerBackend for HttpRanker {
    fn name(&self) -> &str {
        "http-ranker"
    }

    fn score(&self, context: &[Turn], response: &str) -> Result<RankerScores, BackendError> {
        let body = json!({ "context": context, "response": response });
        let resp = self.config.post(&self.client, "score", &body)?;
        let scores: RankerScores = parse_json(resp)?;
        scores.validate()?;
        Ok(scores)
    }
}
