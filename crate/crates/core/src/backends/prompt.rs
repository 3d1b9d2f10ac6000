//! Prompt templates for LLM questioners and completion post-processing.

use serde::{Deserialize, Serialize};

use super::BackendError;
use crate::dialog::Dialog;

/// Instruction line opening every few-shot prompt.
pub const FEWSHOT_INSTRUCTION: &str = "Ask a new question in the following dialog, assume that the questions are designed to help us retrieve this image from a large collection of images:";

/// Caption-only prompt asking for all ten questions at once. `[CAPTION]` is substituted.
pub const UNANSWERED_TEMPLATE: &str = "Write 10 short questions about the image described by the following caption. Assume that the questions are designed to help us retrieve this image from a large collection of images: [CAPTION]";

/// A training dialog together with the question that followed it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptShot {
    pub dialog: Dialog,
    pub next_question: String,
}

impl PromptShot {
    pub fn new(dialog: Dialog, next_question: impl Into<String>) -> Result<Self, BackendError> {
        let next_question = next_question.into();
        if next_question.trim().is_empty() {
            return Err(BackendError::InvalidArgument("shot next_question must not be empty".into()));
        }
        Ok(Self { dialog, next_question })
    }
}

fn push_dialog(out: &mut String, dialog: &Dialog) {
    out.push_str("Caption: ");
    out.push_str(&dialog.caption);
    out.push('\n');
    for round in &dialog.rounds {
        out.push_str("Question: ");
        out.push_str(&round.question);
        out.push_str("\nAnswer: ");
        out.push_str(&round.answer);
        out.push('\n');
    }
}

/// Instruction, then each shot followed by its next question and a blank
/// line, then the live dialog ending in an open `Question:` cue.
pub fn build_fewshot_prompt(dialog: &Dialog, shots: &[PromptShot]) -> String {
    let mut out = String::with_capacity(256);
    out.push_str(FEWSHOT_INSTRUCTION);
    out.push('\n');
    for shot in shots {
        push_dialog(&mut out, &shot.dialog);
        out.push_str("Question: ");
        out.push_str(&shot.next_question);
        out.push_str("\n\n");
    }
    push_dialog(&mut out, dialog);
    out.push_str("Question:");
    out
}

pub fn build_unanswered_prompt(caption: &str) -> Result<String, BackendError> {
    if caption.is_empty() {
        return Err(BackendError::InvalidArgument("caption must not be empty".into()));
    }
    Ok(UNANSWERED_TEMPLATE.replace("[CAPTION]", caption))
}

/// First non-empty line of a completion with any echoed `Question:` cue removed.
pub fn extract_question(completion: &str) -> Option<String> {
    let line = completion.lines().map(str::trim).find(|l| !l.is_empty())?;
    let line = line.strip_prefix("Question:").map(str::trim).unwrap_or(line);
    (!line.is_empty()).then(|| line.to_owned())
}

/// Parses a list reply into questions, dropping enumeration markers such as
/// `1.`, `2)`, `-` or `*`. Blank lines are skipped.
pub fn parse_numbered_questions(completion: &str) -> Vec<String> {
    completion
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .map(|line| {
            let digits = line.len() - line.trim_start_matches(|c: char| c.is_ascii_digit()).len();
            let rest = &line[digits..];
            let rest = if digits > 0 {
                rest.strip_prefix(['.', ')', ':']).unwrap_or(rest)
            } else {
                rest.strip_prefix(['-', '*', '•']).unwrap_or(rest)
            };
            let rest = rest.trim();
            rest.strip_prefix("Question:").map(str::trim).unwrap_or(rest).to_owned()
        })
        .filter(|q| !q.is_empty())
        .collect()
}
