//! VisDial-style JSON: dialogs reference shared question and answer tables by index.
//!
//! ```json
//! {"data": {"questions": ["..."], "answers": ["..."],
//!           "dialogs": [{"image_id": 1, "caption": "...",
//!                        "dialog": [{"question_index": 0, "answer_index": 3}]}]}}
//! ```

use std::path::Path;

use serde::Deserialize;
use serde_json::Value;

use super::{CorpusError, DialogExample};
use crate::dialog::{Dialog, Round, DEFAULT_MAX_ROUNDS};

#[derive(Deserialize)]
struct File {
    data: Data,
}

#[derive(Deserialize)]
struct Data {
    #[serde(default)]
    questions: Vec<String>,
    #[serde(default)]
    answers: Vec<String>,
    dialogs: Vec<Entry>,
}

#[derive(Deserialize)]
struct Entry {
    image_id: Value,
    caption: String,
    #[serde(default)]
    dialog: Vec<Pair>,
}

#[derive(Deserialize)]
struct Pair {
    question_index: usize,
    answer_index: usize,
}

pub fn ingest_visdial(path: &Path) -> Result<Vec<DialogExample>, CorpusError> {
    let text = std::fs::read_to_string(path).map_err(CorpusError::io(path))?;
    parse_visdial(&text).map_err(|e| match e {
        CorpusError::Parse { message, .. } => CorpusError::Parse { path: path.display().to_string(), message },
        other => other,
    })
}

/// Parses and validates every index eagerly; the first bad reference fails the load.
pub fn parse_visdial(text: &str) -> Result<Vec<DialogExample>, CorpusError> {
    let file: File = serde_json::from_str(text).map_err(|e| CorpusError::Parse { path: "<input>".into(), message: e.to_string() })?;
    let Data { questions, answers, dialogs } = file.data;
    dialogs
        .into_iter()
        .enumerate()
        .map(|(n, entry)| {
            let image_id = match entry.image_id {
                Value::String(s) => s,
                Value::Number(num) => num.to_string(),
                other => {
                    return Err(CorpusError::Parse {
                        path: "<input>".into(),
                        message: format!("data.dialogs[{n}].image_id: expected string or number, got {other}"),
                    })
                }
            };
            let integrity = |message: String| CorpusError::Integrity { dialog: n, image_id: image_id.clone(), message };
            if entry.dialog.len() > DEFAULT_MAX_ROUNDS {
                return Err(integrity(format!("{} rounds exceeds the limit of {DEFAULT_MAX_ROUNDS}", entry.dialog.len())));
            }
            let mut rounds = Vec::with_capacity(entry.dialog.len());
            for (r, pair) in entry.dialog.iter().enumerate() {
                let q = questions.get(pair.question_index).ok_or_else(|| {
                    integrity(format!("round {}: question_index {} out of range ({} questions)", r + 1, pair.question_index, questions.len()))
                })?;
                let a = answers.get(pair.answer_index).ok_or_else(|| {
                    integrity(format!("round {}: answer_index {} out of range ({} answers)", r + 1, pair.answer_index, answers.len()))
                })?;
                rounds.push(Round::new(q.clone(), a.clone()));
            }
            Ok(DialogExample { image_id, dialog: Dialog::with_rounds(entry.caption, rounds) })
        })
        .collect()
}
