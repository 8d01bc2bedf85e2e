//! Prompt/completion JSON-lines export for completion-style fine-tuning.

use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, CorpusError, DialogueSample};
use crate::promptkit::{render_dialogue, RoleLabeling};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FinetuneSerialization {
    pub prompt_suffix: String,
    pub completion_prefix: String,
    pub stop_marker: String,
}

impl Default for FinetuneSerialization {
    fn default() -> Self {
        Self {
            prompt_suffix: "\nteacher:".into(),
            completion_prefix: " ".into(),
            stop_marker: "\n".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FinetuneRecord {
    pub prompt: String,
    pub completion: String,
}

/// Dialogue history with teacher/student labels followed by the prompt suffix.
pub fn finetune_prompt(sample: &DialogueSample, ser: &FinetuneSerialization) -> String {
    let history = render_dialogue(sample, RoleLabeling::TeacherStudent, false)
        .expect("rendering without a reference cannot fail");
    format!("{history}{}", ser.prompt_suffix)
}

pub fn finetune_record(
    sample: &DialogueSample,
    ser: &FinetuneSerialization,
) -> Result<FinetuneRecord, CorpusError> {
    let reference = sample
        .reference_response
        .as_deref()
        .ok_or_else(|| CorpusError::MissingReferences(sample.id.clone()))?;
    Ok(FinetuneRecord {
        prompt: finetune_prompt(sample, ser),
        completion: format!("{}{reference}{}", ser.completion_prefix, ser.stop_marker),
    })
}

/// One JSON object per line, keys `prompt` then `completion`.
pub fn export_finetune_dataset(
    corpus: &Corpus,
    ser: &FinetuneSerialization,
) -> Result<String, CorpusError> {
    corpus.require_references()?;
    let mut out = String::new();
    for sample in &corpus.samples {
        let record = finetune_record(sample, ser)?;
        out.push_str(&serde_json::to_string(&record).expect("record serializes"));
        out.push('\n');
    }
    Ok(out)
}
