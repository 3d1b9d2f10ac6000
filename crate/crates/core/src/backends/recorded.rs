//! Replay of stored human dialogs.

use std::collections::HashMap;

use super::{Answerer, BackendError, Questioner};
use crate::corpus::DialogExample;
use crate::dialog::Dialog;

/// Replays the questions of one stored dialog in order.
#[derive(Debug, Clone)]
pub struct RecordedQuestioner {
    dialog: Dialog,
}

impl RecordedQuestioner {
    pub fn new(dialog: Dialog) -> Self {
        Self { dialog }
    }
}

impl Questioner for RecordedQuestioner {
    fn next_question(&self, dialog: &Dialog) -> Result<String, BackendError> {
        let i = dialog.rounds.len();
        self.dialog
            .rounds
            .get(i)
            .map(|r| r.question.clone())
            .ok_or(BackendError::Exhausted { round: i + 1, available: self.dialog.rounds.len() })
    }
}

/// Looks up the stored answer for the target's dialog at the current round.
#[derive(Debug, Clone, Default)]
pub struct RecordedAnswerer {
    dialogs: HashMap<String, Dialog>,
}

impl RecordedAnswerer {
    pub fn new(examples: impl IntoIterator<Item = DialogExample>) -> Self {
        Self { dialogs: examples.into_iter().map(|e| (e.image_id, e.dialog)).collect() }
    }
}

impl Answerer for RecordedAnswerer {
    fn answer(&self, _question: &str, target: &str, history: &Dialog) -> Result<String, BackendError> {
        let stored = self.dialogs.get(target).ok_or_else(|| BackendError::UnknownTarget(target.to_owned()))?;
        let i = history.rounds.len();
        stored
            .rounds
            .get(i)
            .map(|r| r.answer.clone())
            .ok_or(BackendError::Exhausted { round: i + 1, available: stored.rounds.len() })
    }
}
