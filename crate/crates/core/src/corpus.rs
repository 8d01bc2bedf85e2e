//! Dialogue corpora: loading, validation, summary statistics and seeded sampling.
//!
//! Records follow the task schema: `id` (string), `utterances` (array of
//! `{role, text}`) and an optional `response` holding the gold teacher turn.
//! Files may be a single JSON array or JSON-lines; output is always JSON-lines.

use std::collections::HashSet;
use std::fmt;
use std::path::{Path, PathBuf};

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed corpus file: {0}")]
    MalformedFile(String),
    #[error("record {index}: field '{field}': {reason}")]
    Schema {
        index: usize,
        field: String,
        reason: String,
    },
    #[error("duplicate sample id '{0}'")]
    DuplicateId(String),
    #[error("corpus is empty")]
    EmptyCorpus,
    #[error("requested {requested} samples but only {available} are eligible")]
    NotEnoughSamples { requested: usize, available: usize },
    #[error("sample '{0}' has no reference response")]
    MissingReferences(String),
    #[error("holdout fraction must lie strictly between 0 and 1, got {0}")]
    InvalidFraction(f64),
}

pub type Result<T> = std::result::Result<T, CorpusError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Teacher,
    Student,
}

impl Role {
    /// Case-insensitive parse of the two recognised role names.
    pub fn parse(raw: &str) -> Option<Role> {
        match raw.trim().to_ascii_lowercase().as_str() {
            "teacher" => Some(Role::Teacher),
            "student" => Some(Role::Student),
            _ => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Role::Teacher => "teacher",
            Role::Student => "student",
        }
    }
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Turn {
    pub role: Role,
    pub text: String,
}

impl Turn {
    pub fn new(role: Role, text: impl Into<String>) -> Self {
        Self {
            role,
            text: text.into(),
        }
    }

    pub fn teacher(text: impl Into<String>) -> Self {
        Self::new(Role::Teacher, text)
    }

    pub fn student(text: impl Into<String>) -> Self {
        Self::new(Role::Student, text)
    }
}

/// One dialogue context plus its optional gold teacher response.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DialogueSample {
    pub id: String,
    pub utterances: Vec<Turn>,
    #[serde(rename = "response", default, skip_serializing_if = "Option::is_none")]
    pub reference_response: Option<String>,
}

impl DialogueSample {
    pub fn has_reference(&self) -> bool {
        self.reference_response.is_some()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Dev,
    Test,
    Custom,
}

impl std::str::FromStr for Split {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "train" => Ok(Split::Train),
            "dev" => Ok(Split::Dev),
            "test" => Ok(Split::Test),
            "custom" => Ok(Split::Custom),
            other => Err(format!("unknown split '{other}'")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Corpus {
    pub split: Split,
    pub samples: Vec<DialogueSample>,
}

impl Corpus {
    /// Builds a corpus, rejecting duplicate ids.
    pub fn new(split: Split, samples: Vec<DialogueSample>) -> Result<Self> {
        let mut seen = HashSet::with_capacity(samples.len());
        for sample in &samples {
            if !seen.insert(sample.id.as_str()) {
                return Err(CorpusError::DuplicateId(sample.id.clone()));
            }
        }
        Ok(Self { split, samples })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&DialogueSample> {
        self.samples.iter().find(|s| s.id == id)
    }

    pub fn ids(&self) -> Vec<String> {
        self.samples.iter().map(|s| s.id.clone()).collect()
    }

    /// Serializes the corpus as JSON-lines, one record per line, trailing newline included.
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for sample in &self.samples {
            out.push_str(&serde_json::to_string(sample).expect("sample serializes"));
            out.push('\n');
        }
        out
    }

    pub fn write_jsonl(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_jsonl()).map_err(|source| CorpusError::Io {
            path: path.to_path_buf(),
            source,
        })
    }

    /// Fails with `MissingReferences` naming the first sample without a gold response.
    pub fn require_references(&self) -> Result<()> {
        match self.samples.iter().find(|s| !s.has_reference()) {
            Some(s) => Err(CorpusError::MissingReferences(s.id.clone())),
            None => Ok(()),
        }
    }
}

pub fn load_corpus(path: &Path, split: Split) -> Result<Corpus> {
    let content = std::fs::read_to_string(path).map_err(|source| CorpusError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_corpus(&content, split)
}

/// Parses corpus text in either JSON-array or JSON-lines framing.
pub fn parse_corpus(content: &str, split: Split) -> Result<Corpus> {
    let trimmed = content.trim_start();
    let records: Vec<Value> = if trimmed.starts_with('[') {
        serde_json::from_str(content).map_err(|e| CorpusError::MalformedFile(e.to_string()))?
    } else {
        content
            .lines()
            .enumerate()
            .filter(|(_, line)| !line.trim().is_empty())
            .map(|(lineno, line)| {
                serde_json::from_str(line).map_err(|e| {
                    CorpusError::MalformedFile(format!("line {}: {e}", lineno + 1))
                })
            })
            .collect::<Result<_>>()?
    };

    let samples = records
        .iter()
        .enumerate()
        .map(|(index, raw)| validate_record(index, raw))
        .collect::<Result<Vec<_>>>()?;
    Corpus::new(split, samples)
}

fn schema(index: usize, field: &str, reason: impl Into<String>) -> CorpusError {
    CorpusError::Schema {
        index,
        field: field.to_string(),
        reason: reason.into(),
    }
}

fn non_empty_string<'a>(
    obj: &'a Map<String, Value>,
    index: usize,
    field: &str,
) -> Result<Option<&'a str>> {
    match obj.get(field) {
        None | Some(Value::Null) => Ok(None),
        Some(Value::String(s)) if s.trim().is_empty() => Err(schema(index, field, "empty")),
        Some(Value::String(s)) => Ok(Some(s)),
        Some(_) => Err(schema(index, field, "expected a string")),
    }
}

/// Validates one parsed record; `index` is its position in the source file.
pub fn validate_record(index: usize, raw: &Value) -> Result<DialogueSample> {
    let obj = raw
        .as_object()
        .ok_or_else(|| schema(index, "<record>", "expected a JSON object"))?;

    let id = non_empty_string(obj, index, "id")?
        .ok_or_else(|| schema(index, "id", "missing"))?
        .to_string();

    let turns = match obj.get("utterances") {
        None | Some(Value::Null) => return Err(schema(index, "utterances", "missing")),
        Some(Value::Array(turns)) => turns,
        Some(_) => return Err(schema(index, "utterances", "expected an array")),
    };
    if turns.is_empty() {
        return Err(schema(index, "utterances", "empty"));
    }

    let mut utterances = Vec::with_capacity(turns.len());
    for (t, turn) in turns.iter().enumerate() {
        let turn = turn
            .as_object()
            .ok_or_else(|| schema(index, &format!("utterances[{t}]"), "expected an object"))?;
        let role_field = format!("utterances[{t}].role");
        let role_raw = non_empty_string(turn, index, "role")
            .map_err(|_| schema(index, &role_field, "expected a non-empty string"))?
            .ok_or_else(|| schema(index, &role_field, "missing"))?;
        let role = Role::parse(role_raw)
            .ok_or_else(|| schema(index, &role_field, format!("unknown role '{role_raw}'")))?;
        let text_field = format!("utterances[{t}].text");
        let text = non_empty_string(turn, index, "text")
            .map_err(|_| schema(index, &text_field, "expected a non-empty string"))?
            .ok_or_else(|| schema(index, &text_field, "missing"))?;
        utterances.push(Turn::new(role, text));
    }

    let reference_response = non_empty_string(obj, index, "response")?.map(str::to_string);

    Ok(DialogueSample {
        id,
        utterances,
        reference_response,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub sample_count: usize,
    pub turns_mean: f64,
    pub turns_std: f64,
    pub turns_max: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub response_len_mean: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub response_len_std: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub response_len_min: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub response_len_max: Option<usize>,
}

/// Mean and population standard deviation.
fn mean_std(values: &[usize]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<usize>() as f64 / n;
    let var = values
        .iter()
        .map(|&v| {
            let d = v as f64 - mean;
            d * d
        })
        .sum::<f64>()
        / n;
    (mean, var.sqrt())
}

pub fn word_count(text: &str) -> usize {
    text.split_whitespace().count()
}

pub fn corpus_stats(corpus: &Corpus) -> Result<CorpusStats> {
    if corpus.is_empty() {
        return Err(CorpusError::EmptyCorpus);
    }
    let turns: Vec<usize> = corpus.samples.iter().map(|s| s.utterances.len()).collect();
    let (turns_mean, turns_std) = mean_std(&turns);
    let turns_max = turns.iter().copied().max().unwrap_or(0);

    let lengths: Vec<usize> = corpus
        .samples
        .iter()
        .filter_map(|s| s.reference_response.as_deref())
        .map(word_count)
        .collect();
    let (mut mean, mut std, mut min, mut max) = (None, None, None, None);
    if !lengths.is_empty() {
        let (m, s) = mean_std(&lengths);
        mean = Some(m);
        std = Some(s);
        min = lengths.iter().copied().min();
        max = lengths.iter().copied().max();
    }

    Ok(CorpusStats {
        sample_count: corpus.len(),
        turns_mean,
        turns_std,
        turns_max,
        response_len_mean: mean,
        response_len_std: std,
        response_len_min: min,
        response_len_max: max,
    })
}

impl CorpusStats {
    /// Two-column aligned plain-text table.
    pub fn render_table(&self) -> String {
        let fmt_opt = |v: Option<f64>| v.map_or_else(|| "-".to_string(), |v| format!("{v:.3}"));
        let fmt_int = |v: Option<usize>| v.map_or_else(|| "-".to_string(), |v| v.to_string());
        let rows = [
            ("samples", self.sample_count.to_string()),
            ("turns mean", format!("{:.3}", self.turns_mean)),
            ("turns std", format!("{:.3}", self.turns_std)),
            ("turns max", self.turns_max.to_string()),
            ("response words mean", fmt_opt(self.response_len_mean)),
            ("response words std", fmt_opt(self.response_len_std)),
            ("response words min", fmt_int(self.response_len_min)),
            ("response words max", fmt_int(self.response_len_max)),
        ];
        let key_width = rows.iter().map(|(k, _)| k.len()).max().unwrap_or(0);
        let val_width = rows.iter().map(|(_, v)| v.len()).max().unwrap_or(0);
        let mut out = String::new();
        for (k, v) in rows {
            out.push_str(&format!("{k:<key_width$}  {v:>val_width$}\n"));
        }
        out
    }
}

/// The generator behind every seeded draw in this crate: ChaCha8 seeded via
/// `seed_from_u64`, which is specified bit-for-bit and platform independent.
pub fn seeded_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Draws `k` distinct positions from `0..n` by a partial Fisher-Yates shuffle.
/// Positions come back in draw order.
pub fn draw_indices(n: usize, k: usize, seed: u64) -> Vec<usize> {
    assert!(k <= n, "cannot draw {k} of {n}");
    let mut rng = seeded_rng(seed);
    let mut pool: Vec<usize> = (0..n).collect();
    for i in 0..k {
        let j = rng.random_range(i..n);
        pool.swap(i, j);
    }
    pool.truncate(k);
    pool
}

/// Uniform draw without replacement of `n` samples not listed in `exclude_ids`.
/// The result keeps the corpus order of the drawn samples.
pub fn sample_internal_test(
    corpus: &Corpus,
    n: usize,
    seed: u64,
    exclude_ids: &HashSet<String>,
) -> Result<Corpus> {
    let eligible: Vec<&DialogueSample> = corpus
        .samples
        .iter()
        .filter(|s| !exclude_ids.contains(&s.id))
        .collect();
    if let Some(s) = eligible.iter().find(|s| !s.has_reference()) {
        return Err(CorpusError::MissingReferences(s.id.clone()));
    }
    if eligible.len() < n {
        return Err(CorpusError::NotEnoughSamples {
            requested: n,
            available: eligible.len(),
        });
    }
    let mut picked = draw_indices(eligible.len(), n, seed);
    picked.sort_unstable();
    let samples = picked.into_iter().map(|i| eligible[i].clone()).collect();
    Corpus::new(corpus.split, samples)
}

/// Number of holdout samples for a corpus of `n`: `round(fraction * n)`,
/// at least one, and leaving at least one training sample when `n >= 2`.
pub fn holdout_size(n: usize, fraction: f64) -> usize {
    let raw = (fraction * n as f64).round() as usize;
    raw.max(1).min(n.saturating_sub(1).max(1))
}

/// Seeded partition into (train, holdout); both halves keep corpus order.
pub fn split_for_finetune(
    corpus: &Corpus,
    holdout_fraction: f64,
    seed: u64,
) -> Result<(Corpus, Corpus)> {
    if !(holdout_fraction > 0.0 && holdout_fraction < 1.0) {
        return Err(CorpusError::InvalidFraction(holdout_fraction));
    }
    if corpus.is_empty() {
        return Err(CorpusError::EmptyCorpus);
    }
    let n = corpus.len();
    let holdout: HashSet<usize> = draw_indices(n, holdout_size(n, holdout_fraction), seed)
        .into_iter()
        .collect();
    let (mut train, mut held) = (Vec::new(), Vec::new());
    for (i, sample) in corpus.samples.iter().enumerate() {
        if holdout.contains(&i) {
            held.push(sample.clone());
        } else {
            train.push(sample.clone());
        }
    }
    Ok((
        Corpus {
            split: corpus.split,
            samples: train,
        },
        Corpus {
            split: corpus.split,
            samples: held,
        },
    ))
}
