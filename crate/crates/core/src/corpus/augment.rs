//! Dialog generation over existing or new images by alternating questioner
//! and answerer calls from the caption.

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{write_jsonl, CorpusError, DialogExample};
use crate::backends::{Answerer, BackendError, Questioner};
use crate::dialog::{Dialog, Round};

/// An image to dialog about: existing examples keep their caption, new images
/// bring one.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AugmentInput {
    pub image_id: String,
    pub caption: String,
}

impl From<&DialogExample> for AugmentInput {
    fn from(e: &DialogExample) -> Self {
        Self { image_id: e.image_id.clone(), caption: e.dialog.caption.clone() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AugmentFailure {
    pub image_id: String,
    pub round: usize,
    pub error: String,
}

#[derive(Debug, Clone, Default)]
pub struct AugmentOutcome {
    pub examples: Vec<DialogExample>,
    pub failures: Vec<AugmentFailure>,
}

impl AugmentOutcome {
    /// Writes the generated examples as JSON Lines and the failure manifest as JSON.
    pub fn write(&self, out: &Path, manifest: &Path) -> Result<(), CorpusError> {
        write_jsonl(out, &self.examples)?;
        let text = serde_json::to_string_pretty(&serde_json::json!({
            "generated": self.examples.len(),
            "failed": self.failures.len(),
            "failures": self.failures,
        }))
        .expect("manifest serializes");
        std::fs::write(manifest, text).map_err(CorpusError::io(manifest))
    }
}

fn dialog_for(
    input: &AugmentInput,
    questioner: &dyn Questioner,
    answerer: &dyn Answerer,
    rounds: usize,
) -> Result<DialogExample, AugmentFailure> {
    let mut dialog = Dialog::new(input.caption.clone());
    let fail = |round: usize, e: BackendError| AugmentFailure { image_id: input.image_id.clone(), round, error: e.to_string() };
    for round in 1..=rounds {
        let question = questioner.next_question(&dialog).map_err(|e| fail(round, e))?;
        let answer = answerer.answer(&question, &input.image_id, &dialog).map_err(|e| fail(round, e))?;
        dialog.rounds.push(Round::new(question, answer));
    }
    Ok(DialogExample::new(input.image_id.clone(), dialog))
}

/// Generates a `rounds`-round dialog per input. Up to `jobs` images are
/// processed concurrently; output order follows input order. Images whose
/// backends fail are reported in `failures` instead of `examples`.
pub fn augment_dialogues(
    inputs: &[AugmentInput],
    questioner: &dyn Questioner,
    answerer: &dyn Answerer,
    rounds: usize,
    jobs: usize,
) -> Result<AugmentOutcome, CorpusError> {
    if rounds == 0 {
        return Err(CorpusError::InvalidSpec("augmentation needs at least one round".into()));
    }
    let run = || -> Vec<Result<DialogExample, AugmentFailure>> {
        inputs.par_iter().map(|i| dialog_for(i, questioner, answerer, rounds)).collect()
    };
    let results = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| CorpusError::InvalidSpec(format!("thread pool: {e}")))?
        .install(run);
    let mut outcome = AugmentOutcome::default();
    for r in results {
        match r {
            Ok(e) => outcome.examples.push(e),
            Err(f) => outcome.failures.push(f),
        }
    }
    Ok(outcome)
}
