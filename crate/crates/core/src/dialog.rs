//! Dialog values and their serialization into embedding-ready text.
//!
//! A dialog after `i` rounds is the caption followed by `i` question/answer
//! pairs. The retriever embeds it as one string, the elements joined by
//! [`SEPARATOR`] in order `C, Q1, A1, ..., Qi, Ai`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Literal placed between consecutive dialog elements.
pub const SEPARATOR: &str = " [SEP] ";

/// Placeholder text for a masked component.
pub const MASK_TOKEN: &str = "[MASK]";

/// Default cap on question/answer rounds per dialog.
pub const DEFAULT_MAX_ROUNDS: usize = 10;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum DialogError {
    #[error("round {requested} out of range: dialog has {available} rounds")]
    RoundOutOfRange { requested: usize, available: usize },
    #[error("round {round} has no answer yet")]
    Unanswered { round: usize },
    #[error("dialog has {rounds} rounds, more than the limit of {max}")]
    TooManyRounds { rounds: usize, max: usize },
    #[error("{0} must not be empty")]
    Empty(&'static str),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Round {
    pub question: String,
    /// Empty while the question still awaits an answer.
    #[serde(default)]
    pub answer: String,
}

impl Round {
    pub fn new(question: impl Into<String>, answer: impl Into<String>) -> Self {
        Self { question: question.into(), answer: answer.into() }
    }

    pub fn is_answered(&self) -> bool {
        !self.answer.is_empty()
    }
}

/// Caption plus ordered question/answer rounds. Zero rounds is the caption-only dialog.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Dialog {
    pub caption: String,
    #[serde(default)]
    pub rounds: Vec<Round>,
}

impl Dialog {
    pub fn new(caption: impl Into<String>) -> Self {
        Self { caption: caption.into(), rounds: Vec::new() }
    }

    pub fn with_rounds(caption: impl Into<String>, rounds: Vec<Round>) -> Self {
        Self { caption: caption.into(), rounds }
    }

    pub fn len(&self) -> usize {
        self.rounds.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rounds.is_empty()
    }

    /// Append a round, refusing to grow past `max_rounds`.
    pub fn push(&mut self, round: Round, max_rounds: usize) -> Result<(), DialogError> {
        if self.rounds.len() >= max_rounds {
            return Err(DialogError::TooManyRounds { rounds: self.rounds.len() + 1, max: max_rounds });
        }
        self.rounds.push(round);
        Ok(())
    }

    /// Checks the structural invariants: non-empty caption and questions, round cap.
    pub fn validate(&self, max_rounds: usize) -> Result<(), DialogError> {
        if self.caption.is_empty() {
            return Err(DialogError::Empty("caption"));
        }
        if self.rounds.iter().any(|r| r.question.is_empty()) {
            return Err(DialogError::Empty("question"));
        }
        if self.rounds.len() > max_rounds {
            return Err(DialogError::TooManyRounds { rounds: self.rounds.len(), max: max_rounds });
        }
        Ok(())
    }

    pub fn questions(&self) -> impl Iterator<Item = &str> {
        self.rounds.iter().map(|r| r.question.as_str())
    }

    pub fn answers(&self) -> impl Iterator<Item = &str> {
        self.rounds.iter().map(|r| r.answer.as_str())
    }
}

/// Text handed to an embedder, tagged with the round count it encodes.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SerializedQuery {
    pub text: String,
    pub round_index: usize,
}

/// Joins the caption and the first `upto_round` rounds with [`SEPARATOR`].
///
/// Every included round must be answered; a trailing question that is still
/// pending is only excluded when it lies beyond `upto_round`.
pub fn serialize_dialog(dialog: &Dialog, upto_round: usize) -> Result<SerializedQuery, DialogError> {
    if upto_round > dialog.rounds.len() {
        return Err(DialogError::RoundOutOfRange {
            requested: upto_round,
            available: dialog.rounds.len(),
        });
    }
    let included = &dialog.rounds[..upto_round];
    if let Some(pos) = included.iter().position(|r| !r.is_answered()) {
        return Err(DialogError::Unanswered { round: pos + 1 });
    }
    let extra: usize = included
        .iter()
        .map(|r| r.question.len() + r.answer.len() + 2 * SEPARATOR.len())
        .sum();
    let mut text = String::with_capacity(dialog.caption.len() + extra);
    text.push_str(&dialog.caption);
    for round in included {
        text.push_str(SEPARATOR);
        text.push_str(&round.question);
        text.push_str(SEPARATOR);
        text.push_str(&round.answer);
    }
    Ok(SerializedQuery { text, round_index: upto_round })
}

/// The dialog prefix with the caption and the first `i` rounds.
pub fn truncate(dialog: &Dialog, i: usize) -> Result<Dialog, DialogError> {
    if i > dialog.rounds.len() {
        return Err(DialogError::RoundOutOfRange { requested: i, available: dialog.rounds.len() });
    }
    Ok(Dialog { caption: dialog.caption.clone(), rounds: dialog.rounds[..i].to_vec() })
}
