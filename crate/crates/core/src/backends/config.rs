//! Serializable backend references and their construction.

use std::collections::HashMap;
use std::path::PathBuf;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::remote::{ChatClient, ChatMessagesAdapter, FewShotQuestioner, JsonClient, RemoteEmbedder, UnansweredQuestioner, VqaAnswerer};
use super::{Answerer, BackendError, Embedder, HashEmbedder, OracleAnswerer, PromptShot, Questioner, RecordedAnswerer, TemplateQuestioner};
use crate::corpus::{load_examples, AttributeTable};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EmbedderRef {
    Stub { dim: usize, #[serde(default)] seed: u64 },
    Remote { endpoint: super::EndpointConfig, dim: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum QuestionerRef {
    /// Fixed question cycle; `attributes` expands to `what <a> is it?`.
    Template {
        #[serde(default)]
        questions: Vec<String>,
        #[serde(default)]
        attributes: Vec<String>,
    },
    Fewshot {
        endpoint: super::EndpointConfig,
        #[serde(flatten)]
        chat: ChatMessagesAdapter,
        #[serde(default)]
        shots: Vec<PromptShot>,
    },
    Unanswered {
        endpoint: super::EndpointConfig,
        #[serde(flatten)]
        chat: ChatMessagesAdapter,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AnswererRef {
    /// Attribute table JSON written by the synthetic generator.
    Oracle { table: PathBuf },
    /// Dataset whose stored answers are replayed per image id.
    Recorded { dataset: PathBuf },
    Vqa {
        endpoint: super::EndpointConfig,
        /// JSON object mapping image ids to URLs or base64 payloads.
        #[serde(default)]
        images: Option<PathBuf>,
    },
}

pub fn build_embedder(r: &EmbedderRef) -> Result<Arc<dyn Embedder>, BackendError> {
    Ok(match r {
        EmbedderRef::Stub { dim, seed } => Arc::new(HashEmbedder::new(*dim, *seed)?),
        EmbedderRef::Remote { endpoint, dim } => Arc::new(RemoteEmbedder::new(JsonClient::new(endpoint.clone())?, *dim)),
    })
}

pub fn build_questioner(r: &QuestionerRef) -> Result<Arc<dyn Questioner>, BackendError> {
    Ok(match r {
        QuestionerRef::Template { questions, attributes } => {
            let mut all = questions.clone();
            all.extend(attributes.iter().map(|a| format!("what {a} is it?")));
            Arc::new(TemplateQuestioner::new(all)?)
        }
        QuestionerRef::Fewshot { endpoint, chat, shots } => {
            let client = ChatClient::new(JsonClient::new(endpoint.clone())?, Box::new(chat.clone()));
            Arc::new(FewShotQuestioner::new(client, shots.clone()))
        }
        QuestionerRef::Unanswered { endpoint, chat } => {
            let client = ChatClient::new(JsonClient::new(endpoint.clone())?, Box::new(chat.clone()));
            Arc::new(UnansweredQuestioner::new(client))
        }
    })
}

pub fn build_answerer(r: &AnswererRef) -> Result<Arc<dyn Answerer>, BackendError> {
    Ok(match r {
        AnswererRef::Oracle { table } => {
            let table = AttributeTable::load(table).map_err(|e| BackendError::Config(e.to_string()))?;
            Arc::new(OracleAnswerer::new(table))
        }
        AnswererRef::Recorded { dataset } => {
            let examples = load_examples(dataset).map_err(|e| BackendError::Config(e.to_string()))?;
            Arc::new(RecordedAnswerer::new(examples))
        }
        AnswererRef::Vqa { endpoint, images } => {
            let images = match images {
                None => HashMap::new(),
                Some(p) => {
                    let text = std::fs::read_to_string(p).map_err(|e| BackendError::Config(format!("{}: {e}", p.display())))?;
                    serde_json::from_str(&text).map_err(|e| BackendError::Config(format!("{}: {e}", p.display())))?
                }
            };
            Arc::new(VqaAnswerer::new(JsonClient::new(endpoint.clone())?, images))
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dialog::Dialog;

    #[test]
    fn template_ref_from_toml_like_json() {
        let r: QuestionerRef = serde_json::from_str(r#"{"kind":"template","attributes":["color","shape"]}"#).unwrap();
        let q = build_questioner(&r).unwrap();
        assert_eq!(q.next_question(&Dialog::new("x")).unwrap(), "what color is it?");
    }

    #[test]
    fn fewshot_ref_parses() {
        let r: QuestionerRef = serde_json::from_str(
            r#"{"kind":"fewshot","endpoint":{"base_url":"http://localhost:1","path":"v1/chat/completions","token_env":"CHATIR_LLM_TOKEN"},"model":"gpt","max_tokens":32}"#,
        )
        .unwrap();
        match r {
            QuestionerRef::Fewshot { endpoint, chat, shots } => {
                assert_eq!(endpoint.max_in_flight, 4);
                assert_eq!(chat.model, "gpt");
                assert!(shots.is_empty());
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn stub_embedder_ref() {
        let e = build_embedder(&EmbedderRef::Stub { dim: 16, seed: 2 }).unwrap();
        assert_eq!(e.dim(), 16);
        assert!(build_embedder(&EmbedderRef::Stub { dim: 0, seed: 2 }).is_err());
    }
}
