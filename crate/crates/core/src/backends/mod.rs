//! Model backends behind three narrow interfaces.
//!
//! - [`Embedder`] maps serialized dialog text into the image embedding space.
//! - [`Questioner`] proposes the next question from the dialog alone. Its
//!   signature carries no target, so a questioner cannot see what is sought.
//! - [`Answerer`] answers a question about a known target.
//!
//! Each interface has deterministic stubs for offline runs, replay backends
//! over recorded dialogs, and HTTP clients for hosted models.

mod config;
pub mod prompt;
mod recorded;
pub mod remote;
mod stub;

pub use config::{build_answerer, build_embedder, build_questioner, AnswererRef, EmbedderRef, QuestionerRef};
pub use prompt::{build_fewshot_prompt, build_unanswered_prompt, PromptShot};
pub use recorded::{RecordedAnswerer, RecordedQuestioner};
pub use remote::{EndpointConfig, RetryPolicy};
pub use stub::{HashEmbedder, OracleAnswerer, TemplateQuestioner, UNKNOWN_ANSWER};

use std::sync::Arc;

use thiserror::Error;

use crate::dialog::{Dialog, SerializedQuery};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BackendError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("recorded dialog exhausted at round {round} ({available} rounds stored)")]
    Exhausted { round: usize, available: usize },
    #[error("unknown target {0:?}")]
    UnknownTarget(String),
    #[error("{endpoint}: transport failure after {attempts} attempts: {message}")]
    Transport { endpoint: String, attempts: u32, message: String },
    #[error("{endpoint}: HTTP {status}: {body}")]
    Status { endpoint: String, status: u16, body: String },
    #[error("{endpoint}: unexpected response: {message}")]
    Protocol { endpoint: String, message: String },
    #[error("environment variable {0} is not set")]
    MissingToken(String),
    #[error("{0}")]
    Config(String),
}

pub trait Embedder: Send + Sync {
    fn dim(&self) -> usize;
    fn embed(&self, query: &SerializedQuery) -> Result<Vec<f32>, BackendError>;
}

pub trait Questioner: Send + Sync {
    /// The question for round `dialog.len() + 1`.
    fn next_question(&self, dialog: &Dialog) -> Result<String, BackendError>;
}

pub trait Answerer: Send + Sync {
    /// Answers `question` about `target` (an image id). `history` holds the
    /// rounds completed so far.
    fn answer(&self, question: &str, target: &str, history: &Dialog) -> Result<String, BackendError>;
}

impl<T: Embedder + ?Sized> Embedder for Arc<T> {
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn embed(&self, query: &SerializedQuery) -> Result<Vec<f32>, BackendError> {
        (**self).embed(query)
    }
}

impl<T: Questioner + ?Sized> Questioner for Arc<T> {
    fn next_question(&self, dialog: &Dialog) -> Result<String, BackendError> {
        (**self).next_question(dialog)
    }
}

impl<T: Answerer + ?Sized> Answerer for Arc<T> {
    fn answer(&self, question: &str, target: &str, history: &Dialog) -> Result<String, BackendError> {
        (**self).answer(question, target, history)
    }
}
