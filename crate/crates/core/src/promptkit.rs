//! Instruction templates, exemplar filtering and selection, dialogue rendering
//! and byte-exact prompt assembly.
//!
//! Template text and the exemplar stop-list are data (`data/prompts.json`),
//! embedded at compile time.

use std::fmt;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{draw_indices, Corpus, DialogueSample, Role};

const PROMPT_DATA: &str = include_str!("../data/prompts.json");

#[derive(Debug, Error, PartialEq, Eq)]
pub enum PromptError {
    #[error("only {available} exemplar candidates pass the filters, {requested} requested")]
    NotEnoughCandidates { requested: usize, available: usize },
    #[error("pinned exemplar id '{0}' is not in the corpus")]
    UnknownPinnedId(String),
    #[error("pinned exemplar '{0}' fails the teaching-material filter")]
    PinnedFailsFilter(String),
    #[error("sample '{0}' has no reference response to render")]
    MissingReference(String),
    #[error("unknown template '{0}'")]
    UnknownTemplate(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum TemplateId {
    A,
    B,
    C,
    D,
    E,
}

impl TemplateId {
    pub const ALL: [TemplateId; 5] = [
        TemplateId::A,
        TemplateId::B,
        TemplateId::C,
        TemplateId::D,
        TemplateId::E,
    ];
}

impl fmt::Display for TemplateId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self:?}")
    }
}

impl std::str::FromStr for TemplateId {
    type Err = PromptError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_uppercase().as_str() {
            "A" => Ok(TemplateId::A),
            "B" => Ok(TemplateId::B),
            "C" => Ok(TemplateId::C),
            "D" => Ok(TemplateId::D),
            "E" => Ok(TemplateId::E),
            _ => Err(PromptError::UnknownTemplate(s.to_string())),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RoleLabeling {
    /// `teacher:` / `student:`
    TeacherStudent,
    /// Teacher turns become `SpeakerB:`, student turns `SpeakerA:`.
    AnonymousSpeakers,
}

impl RoleLabeling {
    pub fn label(self, role: Role) -> &'static str {
        match (self, role) {
            (RoleLabeling::TeacherStudent, Role::Teacher) => "teacher",
            (RoleLabeling::TeacherStudent, Role::Student) => "student",
            (RoleLabeling::AnonymousSpeakers, Role::Teacher) => "SpeakerB",
            (RoleLabeling::AnonymousSpeakers, Role::Student) => "SpeakerA",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptTemplate {
    pub id: TemplateId,
    pub instruction: String,
    pub role_labeling: RoleLabeling,
    pub cue_label: String,
}

impl PromptTemplate {
    /// The instruction with its trailing example-announcement sentence removed,
    /// used when no exemplars follow.
    pub fn zero_shot_instruction(&self) -> &str {
        let marker = &prompt_data().example_announcement;
        match self.instruction.rfind(marker.as_str()) {
            Some(pos) => &self.instruction[..pos],
            None => &self.instruction,
        }
    }
}

/// Heuristic filter used to keep acknowledgements and greetings out of exemplars.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExemplarFilter {
    pub min_content_words: usize,
    pub stop_list: Vec<String>,
    pub teaching_cues: Vec<String>,
}

impl Default for ExemplarFilter {
    fn default() -> Self {
        prompt_data().exemplar_filter.clone()
    }
}

#[derive(Debug, Deserialize)]
struct PromptData {
    #[allow(dead_code)]
    version: u32,
    example_announcement: String,
    templates: Vec<PromptTemplate>,
    exemplar_filter: ExemplarFilter,
}

fn prompt_data() -> &'static PromptData {
    static DATA: OnceLock<PromptData> = OnceLock::new();
    DATA.get_or_init(|| serde_json::from_str(PROMPT_DATA).expect("bundled prompts.json is valid"))
}

pub fn builtin_templates() -> Vec<PromptTemplate> {
    prompt_data().templates.clone()
}

pub fn template(id: TemplateId) -> PromptTemplate {
    prompt_data()
        .templates
        .iter()
        .find(|t| t.id == id)
        .cloned()
        .expect("all five templates are bundled")
}

/// Lowercases and replaces punctuation with nothing, keeping word boundaries.
/// Tokens left without any alphanumeric character (e.g. a bare `=`) are dropped.
pub fn normalize_tokens(text: &str) -> Vec<String> {
    text.split_whitespace()
        .map(|w| {
            w.chars()
                .filter(|c| c.is_alphanumeric())
                .flat_map(char::to_lowercase)
                .collect::<String>()
        })
        .filter(|w| !w.is_empty())
        .collect()
}

impl ExemplarFilter {
    pub fn is_substantive_reference(&self, response: &str) -> bool {
        let tokens = normalize_tokens(response);
        if tokens.is_empty() {
            return false;
        }
        let normalized = tokens.join(" ");
        if self.stop_list.contains(&normalized) {
            return false;
        }
        tokens.len() >= self.min_content_words
    }

    pub fn has_teaching_cue(&self, response: &str) -> bool {
        let padded = format!(" {} ", normalize_tokens(response).join(" "));
        self.teaching_cues
            .iter()
            .any(|cue| padded.contains(&format!(" {cue} ")))
    }

    fn is_candidate(&self, sample: &DialogueSample) -> bool {
        sample
            .reference_response
            .as_deref()
            .is_some_and(|r| self.is_substantive_reference(r) && self.has_teaching_cue(r))
    }
}

/// Default-filter convenience wrapper.
pub fn is_substantive_reference(response: &str) -> bool {
    ExemplarFilter::default().is_substantive_reference(response)
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ExemplarSet {
    exemplars: Vec<DialogueSample>,
}

impl ExemplarSet {
    pub fn empty() -> Self {
        Self::default()
    }

    pub fn exemplars(&self) -> &[DialogueSample] {
        &self.exemplars
    }

    pub fn ids(&self) -> Vec<String> {
        self.exemplars.iter().map(|s| s.id.clone()).collect()
    }

    pub fn len(&self) -> usize {
        self.exemplars.len()
    }

    pub fn is_empty(&self) -> bool {
        self.exemplars.is_empty()
    }
}

/// How exemplars are chosen from the training pool.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ExemplarChoice {
    /// Exactly these ids, in this order. `allow_unfiltered` downgrades
    /// `PinnedFailsFilter` to an accepted exemplar.
    Pinned {
        ids: Vec<String>,
        #[serde(default)]
        allow_unfiltered: bool,
    },
    /// `k` candidates drawn by seed from those passing the filter.
    Sampled { k: usize, seed: u64 },
}

pub fn select_exemplars(
    corpus: &Corpus,
    choice: &ExemplarChoice,
    filter: &ExemplarFilter,
) -> Result<ExemplarSet, PromptError> {
    match choice {
        ExemplarChoice::Pinned {
            ids,
            allow_unfiltered,
        } => {
            let mut exemplars = Vec::with_capacity(ids.len());
            for id in ids {
                let sample = corpus
                    .get(id)
                    .ok_or_else(|| PromptError::UnknownPinnedId(id.clone()))?;
                let reference = sample
                    .reference_response
                    .as_deref()
                    .ok_or_else(|| PromptError::MissingReference(id.clone()))?;
                if !allow_unfiltered && !filter.is_substantive_reference(reference) {
                    return Err(PromptError::PinnedFailsFilter(id.clone()));
                }
                exemplars.push(sample.clone());
            }
            Ok(ExemplarSet { exemplars })
        }
        ExemplarChoice::Sampled { k, seed } => {
            if *k == 0 {
                return Ok(ExemplarSet::empty());
            }
            let candidates: Vec<&DialogueSample> =
                corpus.samples.iter().filter(|s| filter.is_candidate(s)).collect();
            if candidates.len() < *k {
                return Err(PromptError::NotEnoughCandidates {
                    requested: *k,
                    available: candidates.len(),
                });
            }
            let exemplars = draw_indices(candidates.len(), *k, *seed)
                .into_iter()
                .map(|i| candidates[i].clone())
                .collect();
            Ok(ExemplarSet { exemplars })
        }
    }
}

/// Renders turns one per line as `<label>: <text>`, without a trailing newline.
pub fn render_dialogue(
    sample: &DialogueSample,
    labeling: RoleLabeling,
    include_reference: bool,
) -> Result<String, PromptError> {
    let mut lines: Vec<String> = sample
        .utterances
        .iter()
        .map(|turn| format!("{}: {}", labeling.label(turn.role), turn.text))
        .collect();
    if include_reference {
        let reference = sample
            .reference_response
            .as_deref()
            .ok_or_else(|| PromptError::MissingReference(sample.id.clone()))?;
        lines.push(format!("{}: {}", labeling.label(Role::Teacher), reference));
    }
    Ok(lines.join("\n"))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AssembledPrompt {
    pub text: String,
    pub template_id: TemplateId,
    pub exemplar_ids: Vec<String>,
    pub target_id: String,
}

/// Layout: instruction, blank line, exemplars (with references) separated by
/// blank lines, blank line, target history, newline, cue label.
pub fn assemble_prompt(
    template: &PromptTemplate,
    exemplars: &ExemplarSet,
    target: &DialogueSample,
) -> Result<AssembledPrompt, PromptError> {
    let mut blocks: Vec<String> = Vec::with_capacity(exemplars.len() + 2);
    if exemplars.is_empty() {
        blocks.push(template.zero_shot_instruction().to_string());
    } else {
        blocks.push(template.instruction.clone());
        for exemplar in exemplars.exemplars() {
            blocks.push(render_dialogue(exemplar, template.role_labeling, true)?);
        }
    }
    blocks.push(render_dialogue(target, template.role_labeling, false)?);

    let mut text = blocks.join("\n\n");
    text.push('\n');
    text.push_str(&template.cue_label);

    Ok(AssembledPrompt {
        text,
        template_id: template.id,
        exemplar_ids: exemplars.ids(),
        target_id: target.id.clone(),
    })
}
