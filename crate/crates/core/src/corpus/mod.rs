//! Dialog datasets: VisDial-style ingestion, JSON Lines examples, training-time
//! masking, a synthetic attribute world for offline runs, and dialog augmentation.

mod augment;
mod masking;
mod synthetic;
mod visdial;

pub use augment::{augment_dialogues, AugmentFailure, AugmentInput, AugmentOutcome};
pub use masking::{apply_masking, MaskStrategy, MaskingPolicy};
pub use synthetic::{generate_synthetic, AttributeTable, SyntheticCorpus, SyntheticSpec};
pub use visdial::{ingest_visdial, parse_visdial};

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dialog::{Dialog, Round};

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("{path}: parse error: {message}")]
    Parse { path: String, message: String },
    #[error("dialog {dialog} (image {image_id}): {message}")]
    Integrity { dialog: usize, image_id: String, message: String },
    #[error("invalid masking policy: {0}")]
    InvalidPolicy(String),
    #[error("invalid synthetic spec: {0}")]
    InvalidSpec(String),
}

impl CorpusError {
    pub(crate) fn io(path: &Path) -> impl FnOnce(std::io::Error) -> Self + '_ {
        move |source| Self::Io { path: path.display().to_string(), source }
    }
}

/// An image id paired with its dialog.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DialogExample {
    pub image_id: String,
    pub dialog: Dialog,
}

/// JSON Lines wire form: `{image_id, caption, rounds: [{q, a}]}`.
#[derive(Debug, Serialize, Deserialize)]
struct ExampleLine {
    image_id: String,
    caption: String,
    #[serde(default)]
    rounds: Vec<QaLine>,
}

#[derive(Debug, Serialize, Deserialize)]
struct QaLine {
    q: String,
    #[serde(default)]
    a: String,
}

impl From<&DialogExample> for ExampleLine {
    fn from(e: &DialogExample) -> Self {
        Self {
            image_id: e.image_id.clone(),
            caption: e.dialog.caption.clone(),
            rounds: e.dialog.rounds.iter().map(|r| QaLine { q: r.question.clone(), a: r.answer.clone() }).collect(),
        }
    }
}

impl From<ExampleLine> for DialogExample {
    fn from(l: ExampleLine) -> Self {
        Self {
            image_id: l.image_id,
            dialog: Dialog::with_rounds(l.caption, l.rounds.into_iter().map(|r| Round::new(r.q, r.a)).collect()),
        }
    }
}

impl DialogExample {
    pub fn new(image_id: impl Into<String>, dialog: Dialog) -> Self {
        Self { image_id: image_id.into(), dialog }
    }

    /// One JSON Lines record, without the trailing newline.
    pub fn to_json_line(&self) -> String {
        serde_json::to_string(&ExampleLine::from(self)).expect("example serializes")
    }

    pub fn from_json_line(line: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str::<ExampleLine>(line).map(Into::into)
    }
}

pub fn write_jsonl(path: &Path, examples: &[DialogExample]) -> Result<(), CorpusError> {
    let file = File::create(path).map_err(CorpusError::io(path))?;
    let mut w = BufWriter::new(file);
    for e in examples {
        writeln!(w, "{}", e.to_json_line()).map_err(CorpusError::io(path))?;
    }
    w.flush().map_err(CorpusError::io(path))
}

pub fn read_jsonl(path: &Path) -> Result<Vec<DialogExample>, CorpusError> {
    let file = File::open(path).map_err(CorpusError::io(path))?;
    let mut out = Vec::new();
    for (n, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(CorpusError::io(path))?;
        if line.trim().is_empty() {
            continue;
        }
        let e = DialogExample::from_json_line(&line).map_err(|e| CorpusError::Parse {
            path: path.display().to_string(),
            message: format!("line {}: {e}", n + 1),
        })?;
        out.push(e);
    }
    Ok(out)
}

/// Loads `.jsonl` example files or VisDial-style `.json` files.
pub fn load_examples(path: &Path) -> Result<Vec<DialogExample>, CorpusError> {
    match path.extension().and_then(|e| e.to_str()) {
        Some("jsonl") => read_jsonl(path),
        _ => ingest_visdial(path),
    }
}
