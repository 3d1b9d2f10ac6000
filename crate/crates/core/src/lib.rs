//! Dialog-driven interactive image retrieval.
//!
//! A search starts from a short caption. Each round a questioner asks about
//! the unseen target, an answerer replies, and the whole dialog is serialized,
//! re-embedded and ranked against a fixed corpus of image embeddings.
//!
//! - [`dialog`]: dialog values and their separator-joined serialization
//! - [`corpus`]: dataset ingestion, masking policies, synthetic data, augmentation
//! - [`index`]: immutable embedding corpus with exact cosine top-k and rank queries
//! - [`backends`]: embedder / questioner / answerer interfaces, prompts, stubs, HTTP clients
//! - [`trainer`]: smooth Recall@K surrogate loss and a linear projection-head trainer
//! - [`eval`]: Hits@K with success-pool stopping, average target rank, repetition stats

pub mod backends;
pub mod corpus;
pub mod dialog;
pub mod eval;
pub mod hash;
pub mod index;
pub mod trainer;

pub use backends::{Answerer, BackendError, Embedder, Questioner};
pub use corpus::{DialogExample, MaskStrategy, MaskingPolicy};
pub use dialog::{serialize_dialog, truncate, Dialog, DialogError, Round, SerializedQuery};
pub use eval::{EvalReport, RankTrace};
pub use index::{EmbeddingCorpus, IndexError, Ranking, Retriever};
pub use trainer::{ProjectionHead, TrainerConfig};
