//! Fault-injecting wrappers used to exercise retry and failure accounting.

use std::collections::HashSet;
use std::sync::atomic::{AtomicU64, Ordering};

use sha2::{Digest, Sha256};

use super::{
    BackendError, CompletionBackend, CompletionResult, GenerationParams, RankerBackend,
    RankerScores, TransientKind,
};
use crate::corpus::Turn;

/// Which calls fail. Transient faults are drawn per (prompt, attempt) from a
/// seeded hash, so a given prompt sees the same fault sequence on every run.
#[derive(Debug, Clone, Default)]
pub struct FaultPlan {
    /// Probability that any single attempt is throttled.
    pub throttle_rate: f64,
    pub seed: u64,
    /// Prompts containing any of these markers always fail transiently.
    pub permanent_markers: Vec<String>,
    /// Prompts containing any of these markers fail with `InvalidRequest`.
    pub invalid_markers: Vec<String>,
}

impl FaultPlan {
    fn roll(&self, key: &str, attempt: u64) -> f64 {
        let mut h = Sha256::new();
        h.update(self.seed.to_le_bytes());
        h.update(attempt.to_le_bytes());
        h.update(key.as_bytes());
        let out = h.finalize();
        let bits = u64::from_le_bytes(out[..8].try_into().expect("32-byte digest"));
        (bits >> 11) as f64 / (1u64 << 53) as f64
    }

    fn check(&self, key: &str, attempt: u64) -> Result<(), BackendError> {
        if self.invalid_markers.iter().any(|m| key.contains(m.as_str())) {
            return Err(BackendError::InvalidRequest("injected invalid request".into()));
        }
        if self.permanent_markers.iter().any(|m| key.contains(m.as_str())) {
            return Err(BackendError::Transient {
                kind: TransientKind::Server(503),
                message: "injected outage".into(),
            });
        }
        if self.roll(key, attempt) < self.throttle_rate {
            return Err(BackendError::throttled("injected throttle"));
        }
        Ok(())
    }
}

/// Counts attempts per key so fault draws are independent of thread timing.
#[derive(Debug, Default)]
struct AttemptBook {
    seen: std::sync::Mutex<std::collections::HashMap<String, u64>>,
    total: AtomicU64,
}

impl AttemptBook {
    fn next(&self, key: &str) -> u64 {
        self.total.fetch_add(1, Ordering::SeqCst);
        let mut seen = self.seen.lock().expect("attempt book lock");
        let n = seen.entry(key.to_string()).or_insert(0);
        *n += 1;
        *n
    }

    fn max_per_key(&self) -> u64 {
        self.seen
            .lock()
            .expect("attempt book lock")
            .values()
            .copied()
            .max()
            .unwrap_or(0)
    }
}

pub struct FaultyCompletion<B> {
    inner: B,
    plan: FaultPlan,
    book: AttemptBook,
}

impl<B: CompletionBackend> FaultyCompletion<B> {
    pub fn new(inner: B, plan: FaultPlan) -> Self {
        Self {
            inner,
            plan,
            book: AttemptBook::default(),
        }
    }

    pub fn total_attempts(&self) -> u64 {
        self.book.total.load(Ordering::SeqCst)
    }

    /// Largest number of attempts any single prompt received.
    pub fn max_attempts_per_prompt(&self) -> u64 {
        self.book.max_per_key()
    }

    pub fn distinct_prompts(&self) -> HashSet<String> {
        self.book.seen.lock().expect("attempt book lock").keys().cloned().collect()
    }
}

impl<B: CompletionBackend> CompletionBackend for FaultyCompletion<B> {
    fn name(&self) -> &str {
        "fault-injected"
    }

    fn complete(&self, prompt: &str, params: &GenerationParams) -> Result<CompletionResult, BackendError> {
        let attempt = self.book.next(prompt);
        self.plan.check(prompt, attempt)?;
        self.inner.complete(prompt, params)
    }
}

pub struct FaultyRanker<R> {
    inner: R,
    plan: FaultPlan,
    book: AttemptBook,
}

impl<R: RankerBackend> FaultyRanker<R> {
    pub fn new(inner: R, plan: FaultPlan) -> Self {
        Self {
            inner,
            plan,
            book: AttemptBook::default(),
        }
    }

    pub fn total_attempts(&self) -> u64 {
        self.book.total.load(Ordering::SeqCst)
    }
}

impl<R: RankerBackend> RankerBackend for FaultyRanker<R> {
    fn name(&self) -> &str {
        "fault-injected"
    }

    fn score(&self, context: &[Turn], response: &str) -> Result<RankerScores, BackendError> {
        let attempt = self.book.next(response);
        self.plan.check(response, attempt)?;
        self.inner.score(context, response)
    }
}
