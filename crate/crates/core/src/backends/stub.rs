//! Deterministic offline backends.

use super::{Answerer, BackendError, Embedder, Questioner};
use crate::corpus::AttributeTable;
use crate::dialog::{Dialog, SerializedQuery};
use crate::hash;

/// Reply given when a question names no known attribute.
pub const UNKNOWN_ANSWER: &str = "unknown";

/// Hashed bag-of-tokens embedder: each whitespace token lands in one of `dim`
/// buckets, counts are accumulated and the vector is L2-normalized.
#[derive(Debug, Clone)]
pub struct HashEmbedder {
    dim: usize,
    seed: u64,
}

impl HashEmbedder {
    pub fn new(dim: usize, seed: u64) -> Result<Self, BackendError> {
        if dim == 0 {
            return Err(BackendError::InvalidArgument("embedding dimension must be positive".into()));
        }
        Ok(Self { dim, seed })
    }

    pub fn bucket(&self, token: &str) -> usize {
        (hash::seeded(self.seed, token.as_bytes()) % self.dim as u64) as usize
    }

    /// Normalized bucket counts of `text`.
    pub fn embed_text(&self, text: &str) -> Result<Vec<f32>, BackendError> {
        let mut v = vec![0f32; self.dim];
        let mut any = false;
        for token in text.split_whitespace() {
            v[self.bucket(token)] += 1.0;
            any = true;
        }
        if !any {
            return Err(BackendError::InvalidArgument("cannot embed empty text".into()));
        }
        let norm = v.iter().map(|x| x * x).sum::<f32>().sqrt();
        v.iter_mut().for_each(|x| *x /= norm);
        Ok(v)
    }
}

impl Embedder for HashEmbedder {
    fn dim(&self) -> usize {
        self.dim
    }

    fn embed(&self, query: &SerializedQuery) -> Result<Vec<f32>, BackendError> {
        self.embed_text(&query.text)
    }
}

/// Cycles a fixed question list by round index.
#[derive(Debug, Clone)]
pub struct TemplateQuestioner {
    questions: Vec<String>,
}

impl TemplateQuestioner {
    pub fn new(questions: Vec<String>) -> Result<Self, BackendError> {
        if questions.is_empty() || questions.iter().any(|q| q.trim().is_empty()) {
            return Err(BackendError::InvalidArgument("template questions must be non-empty".into()));
        }
        Ok(Self { questions })
    }

    /// One `what <attribute> is it?` question per attribute.
    pub fn for_attributes<S: AsRef<str>>(names: &[S]) -> Result<Self, BackendError> {
        Self::new(names.iter().map(|n| format!("what {} is it?", n.as_ref())).collect())
    }

    pub fn questions(&self) -> &[String] {
        &self.questions
    }
}

impl Questioner for TemplateQuestioner {
    fn next_question(&self, dialog: &Dialog) -> Result<String, BackendError> {
        Ok(self.questions[dialog.rounds.len() % self.questions.len()].clone())
    }
}

/// Answers truthfully from an attribute table: the first question word that
/// names an attribute selects the reply.
#[derive(Debug, Clone)]
pub struct OracleAnswerer {
    table: AttributeTable,
}

impl OracleAnswerer {
    pub fn new(table: AttributeTable) -> Self {
        Self { table }
    }
}

impl Answerer for OracleAnswerer {
    fn answer(&self, question: &str, target: &str, _history: &Dialog) -> Result<String, BackendError> {
        let row = self.table.row(target).ok_or_else(|| BackendError::UnknownTarget(target.to_owned()))?;
        let asked = question
            .split(|c: char| !c.is_alphanumeric() && c != '_')
            .filter(|w| !w.is_empty())
            .find_map(|w| self.table.attribute_index(&w.to_lowercase()));
        Ok(match asked {
            Some(a) => row[a].clone(),
            None => UNKNOWN_ANSWER.to_owned(),
        })
    }
}
