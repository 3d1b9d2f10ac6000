use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use super::{EvalError, RankTrace};
use crate::dialog::Dialog;

/// Mean 1-based target rank at `round` over all traces.
pub fn average_target_rank(traces: &[RankTrace], round: usize) -> Result<f64, EvalError> {
    if traces.is_empty() {
        return Err(EvalError::NoExamples);
    }
    let mut sum = 0u64;
    for t in traces {
        let r = t.ranks.get(round).ok_or_else(|| EvalError::TraceTooShort { id: t.image_id.clone(), round })?;
        sum += *r as u64;
    }
    Ok(sum as f64 / traces.len() as f64)
}

/// Questioner repetition and vocabulary statistics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RepetitionStats {
    /// Questions equal (after trimming) to an earlier question of the same dialog.
    pub avg_exact_repeats_per_dialog: f64,
    /// Distinct whitespace tokens over all questions of a dialog.
    pub avg_unique_tokens_per_dialog: f64,
    /// Distinct whitespace tokens per answer, averaged over all answers.
    pub avg_unique_tokens_per_answer: f64,
}

pub fn exact_repeats(dialog: &Dialog) -> usize {
    let mut seen = HashSet::new();
    dialog.questions().filter(|q| !seen.insert(q.trim())).count()
}

fn unique_tokens<'a>(texts: impl Iterator<Item = &'a str>) -> usize {
    texts.flat_map(str::split_whitespace).collect::<HashSet<_>>().len()
}

pub fn repetition_stats(dialogs: &[Dialog]) -> Result<RepetitionStats, EvalError> {
    if dialogs.is_empty() {
        return Err(EvalError::NoExamples);
    }
    let n = dialogs.len() as f64;
    let repeats: usize = dialogs.iter().map(exact_repeats).sum();
    let question_tokens: usize = dialogs.iter().map(|d| unique_tokens(d.questions())).sum();
    let (answer_tokens, answers) = dialogs
        .iter()
        .flat_map(Dialog::answers)
        .fold((0usize, 0usize), |(tok, cnt), a| (tok + unique_tokens(std::iter::once(a)), cnt + 1));
    Ok(RepetitionStats {
        avg_exact_repeats_per_dialog: repeats as f64 / n,
        avg_unique_tokens_per_dialog: question_tokens as f64 / n,
        avg_unique_tokens_per_answer: if answers == 0 { 0.0 } else { answer_tokens as f64 / answers as f64 },
    })
}
