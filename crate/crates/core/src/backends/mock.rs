//! Offline stand-ins for the three backend kinds. All are pure functions of
//! their inputs and the configured seed.

use std::collections::HashSet;
use std::time::Instant;

use sha2::{Digest, Sha256};

use super::{
    elapsed_ms, normalize, BackendError, CompletionBackend, CompletionResult, EmbeddingProvider,
    FinishReason, GenerationParams, RankerBackend, RankerScores, TokenEmbedding,
};
use crate::corpus::Turn;

const CANNED: &[&str] = &[
    "Yes, that's right! Can you use \"{w}\" in another sentence?",
    "Good try, but \"{w}\" is not quite right here. What other word could you use?",
    "Great job! Remember that \"{w}\" is usually followed by a noun.",
    "Nearly there - think about the tense you need with \"{w}\".",
    "That's a good question. We often say \"{w}\" in informal English, but it is less common in writing.",
    "Ok great! So you know how to use \"{w}\" now, right?",
    "Well done. Could you explain why you chose \"{w}\"?",
    "Not quite - \"{w}\" needs a preposition after it. Try again?",
];

fn digest64(seed: u64, parts: &[&[u8]]) -> u64 {
    let mut hasher = Sha256::new();
    hasher.update(seed.to_le_bytes());
    for part in parts {
        hasher.update((part.len() as u64).to_le_bytes());
        hasher.update(part);
    }
    let out = hasher.finalize();
    u64::from_le_bytes(out[..8].try_into().expect("sha256 has 32 bytes"))
}

/// Picks the longest alphabetic word of the last dialogue line before the cue.
fn focus_word(prompt: &str) -> String {
    let line = prompt.lines().rev().nth(1).unwrap_or("");
    let text = line.split_once(": ").map_or(line, |(_, t)| t);
    text.split(|c: char| !c.is_alphabetic() && c != '\'')
        .filter(|w| w.chars().any(char::is_alphabetic))
        .fold("", |best: &str, w| if w.len() > best.len() { w } else { best })
        .to_lowercase()
}

/// Canned teacher-style completions keyed by a hash of (seed, prompt).
///
/// Roughly one output in four continues the dialogue with an extra
/// `student:` line, as real completion models do.
#[derive(Debug, Clone)]
pub struct MockCompletion {
    seed: u64,
}

impl MockCompletion {
    pub fn new(seed: u64) -> Self {
        Self { seed }
    }

    pub fn raw_text(&self, prompt: &str) -> String {
        let h = digest64(self.seed, &[prompt.as_bytes()]);
        let mut word = focus_word(prompt);
        if word.is_empty() {
            word = "that".into();
        }
        let template = CANNED[(h % CANNED.len() as u64) as usize];
        let mut text = format!(" {}", template.replace("{w}", &word));
        if (h >> 16).is_multiple_of(4) {
            text.push_str("\nstudent: ok thanks");
        }
        text
    }
}

impl CompletionBackend for MockCompletion {
    fn name(&self) -> &str {
        "mock"
    }

    fn complete(&self, prompt: &str, params: &GenerationParams) -> Result<CompletionResult, BackendError> {
        let start = Instant::now();
        let mut text = self.raw_text(prompt);
        let mut finish_reason = FinishReason::Stop;

        if let Some(stops) = &params.stop {
            let cut = stops
                .iter()
                .filter(|s| !s.is_empty())
                .filter_map(|s| text.find(s.as_str()))
                .min();
            if let Some(cut) = cut {
                text.truncate(cut);
            }
        }

        let words: Vec<&str> = text.split_whitespace().collect();
        let max = params.max_tokens as usize;
        if words.len() > max {
            text = format!(" {}", words[..max].join(" "));
            finish_reason = FinishReason::Length;
        }

        Ok(CompletionResult {
            completion_tokens: text.split_whitespace().count() as u32,
            prompt_tokens: prompt.split_whitespace().count() as u32,
            text,
            finish_reason,
            latency_ms: elapsed_ms(start),
            attempts: 1,
        })
    }
}

pub const MOCK_EMBEDDING_DIM: usize = 64;

/// Context-free token embeddings from hashed character trigrams.
///
/// Tokens are lowercase alphanumeric runs (apostrophes kept). Each vector is a
/// non-negative bag of trigram buckets, so cosine similarities lie in [0, 1]
/// and words sharing spelling score higher.
#[derive(Debug, Clone)]
pub struct MockEmbedding {
    seed: u64,
}

impl MockEmbedding {
    pub fn new(seed: u64) -> Self {
        Self { seed }
    }

    pub fn tokenize(text: &str) -> Vec<String> {
        text.split(|c: char| !c.is_alphanumeric() && c != '\'')
            .map(|t| t.trim_matches('\'').to_lowercase())
            .filter(|t| !t.is_empty())
            .collect()
    }

    fn vector(&self, token: &str) -> Vec<f64> {
        let padded: Vec<char> = format!("#{token}#").chars().collect();
        let mut v = vec![0.0; MOCK_EMBEDDING_DIM];
        for gram in padded.windows(3) {
            let gram: String = gram.iter().collect();
            let h = digest64(self.seed, &[gram.as_bytes()]);
            v[(h % MOCK_EMBEDDING_DIM as u64) as usize] += 1.0;
        }
        // whole-word feature keeps distinct short words apart
        let h = digest64(self.seed ^ 0x9e37_79b9_7f4a_7c15, &[token.as_bytes()]);
        v[(h % MOCK_EMBEDDING_DIM as u64) as usize] += 2.0;
        normalize(v).expect("at least one feature is set")
    }
}

impl EmbeddingProvider for MockEmbedding {
    fn name(&self) -> &str {
        "mock-trigram"
    }

    fn embed_tokens(&self, text: &str) -> Result<Vec<TokenEmbedding>, BackendError> {
        let tokens = Self::tokenize(text);
        if tokens.is_empty() {
            return Err(BackendError::EmptyText);
        }
        Ok(tokens
            .into_iter()
            .map(|token| TokenEmbedding {
                vector: self.vector(&token),
                token,
            })
            .collect())
    }
}

/// Heuristic ranker. With `n` response words and `overlap` the fraction of
/// distinct response words found anywhere in the context:
///
/// - `updown = n / (n + 8)`
/// - `human_vs_rand = 0.3 + 0.7 * overlap`
/// - `human_vs_machine = 1 - 0.5 * |n - 9| / (n + 9)`
#[derive(Debug, Clone, Default)]
pub struct MockRanker;

impl MockRanker {
    pub fn new() -> Self {
        Self
    }

    pub fn heuristic(context: &[Turn], response: &str) -> RankerScores {
        let words = MockEmbedding::tokenize(response);
        let n = words.len() as f64;
        let context_words: HashSet<String> = context
            .iter()
            .flat_map(|t| MockEmbedding::tokenize(&t.text))
            .collect();
        let distinct: HashSet<&String> = words.iter().collect();
        let overlap = if distinct.is_empty() {
            0.0
        } else {
            distinct.iter().filter(|w| context_words.contains(**w)).count() as f64
                / distinct.len() as f64
        };
        RankerScores {
            updown: n / (n + 8.0),
            human_vs_rand: 0.3 + 0.7 * overlap,
            human_vs_machine: 1.0 - 0.5 * (n - 9.0).abs() / (n + 9.0),
        }
    }
}

impl RankerBackend for MockRanker {
    fn name(&self) -> &str {
        "mock-heuristic"
    }

    fn score(&self, context: &[Turn], response: &str) -> Result<RankerScores, BackendError> {
        if response.trim().is_empty() {
            return Err(BackendError::EmptyText);
        }
        Ok(Self::heuristic(context, response))
    }
}
