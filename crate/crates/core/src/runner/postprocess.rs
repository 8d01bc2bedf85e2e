//! Cleanup of raw completions into a single teacher utterance.

use crate::promptkit::PromptTemplate;

/// Labels that mark a new dialogue turn, lowercase, colon included.
const ROLE_LABELS: &[&str] = &[
    "teacher:",
    "student:",
    "speakera:",
    "speakerb:",
    "speaker a:",
    "speaker b:",
];

const QUOTE_PAIRS: &[(char, char)] = &[
    ('"', '"'),
    ('\'', '\''),
    ('`', '`'),
    ('\u{201c}', '\u{201d}'),
    ('\u{2018}', '\u{2019}'),
];

fn strip_prefix_ci<'a>(text: &'a str, prefix: &str) -> Option<&'a str> {
    let head = text.get(..prefix.len())?;
    head.eq_ignore_ascii_case(prefix).then(|| &text[prefix.len()..])
}

fn starts_with_role_label(line: &str) -> bool {
    let line = line.trim_start();
    ROLE_LABELS.iter().any(|l| strip_prefix_ci(line, l).is_some())
}

/// Cuts `text` before the first line that opens a new dialogue turn.
fn cut_at_role_line(text: &str) -> &str {
    let mut offset = 0;
    for line in text.split_inclusive('\n') {
        if starts_with_role_label(line) {
            return &text[..offset];
        }
        offset += line.len();
    }
    text
}

fn strip_wrapping_quotes(text: &str) -> &str {
    let mut chars = text.chars();
    let (Some(first), Some(last)) = (chars.next(), chars.next_back()) else {
        return text;
    };
    if QUOTE_PAIRS.iter().any(|&(open, close)| first == open && last == close) {
        &text[first.len_utf8()..text.len() - last.len_utf8()]
    } else {
        text
    }
}

/// Turns a raw completion into the teacher's utterance:
///
/// 1. drop one leading echo of the cue label (`teacher:` / `SpeakerB:`,
///    any case),
/// 2. cut at the first line that starts a new dialogue turn,
/// 3. strip one pair of symmetric wrapping quotes,
/// 4. trim whitespace.
///
/// An empty result is legal; callers treat it as "no response".
pub fn postprocess_response(raw: &str, template: &PromptTemplate) -> String {
    let mut text = raw.trim_start();
    let echoes = [template.cue_label.as_str(), "teacher:", "speakerb:", "speaker b:"];
    if let Some(rest) = echoes.iter().find_map(|e| strip_prefix_ci(text, e)) {
        text = rest;
    }
    let text = cut_at_role_line(text).trim();
    let text = strip_wrapping_quotes(text).trim();
    cut_at_role_line(text).trim().to_string()
}
