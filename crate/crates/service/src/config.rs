//! Service configuration: a TOML file with environment overrides.

use std::collections::{BTreeMap, HashMap};
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use chatir_core::backends::{build_embedder, build_questioner, BackendError, EmbedderRef, QuestionerRef};
use chatir_core::index::{EmbeddingCorpus, IndexError, Retriever};
use serde::Deserialize;

use crate::session::{CorpusEntry, ManagerConfig, SessionManager};

pub const BIND_ENV: &str = "CHATIR_BIND";
pub const PORT_ENV: &str = "CHATIR_PORT";
pub const TTL_ENV: &str = "CHATIR_SESSION_TTL_SECS";

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("reading {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("parsing {path}: {message}")]
    Parse { path: String, message: String },
    #[error("environment variable {name}: {message}")]
    Env { name: &'static str, message: String },
    #[error("corpus {name:?}: {source}")]
    Corpus { name: String, source: IndexError },
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error("{0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Deserialize)]
pub struct CorpusConfig {
    pub name: String,
    pub embeddings: PathBuf,
    pub ids: PathBuf,
    /// JSON object mapping ids to thumbnail URLs.
    #[serde(default)]
    pub thumbnails: Option<PathBuf>,
}

#[derive(Debug, Clone, Deserialize)]
pub struct ServiceConfig {
    #[serde(default = "default_bind")]
    pub bind: String,
    #[serde(default = "default_port")]
    pub port: u16,
    #[serde(default = "default_ttl")]
    pub session_ttl_secs: u64,
    #[serde(default = "default_max_rounds")]
    pub max_rounds: usize,
    #[serde(default = "default_k")]
    pub default_k: usize,
    pub corpora: Vec<CorpusConfig>,
    pub embedder: EmbedderRef,
    pub questioner: QuestionerRef,
}

fn default_bind() -> String {
    "127.0.0.1".into()
}
fn default_port() -> u16 {
    8080
}
fn default_ttl() -> u64 {
    30 * 60
}
fn default_max_rounds() -> usize {
    chatir_core::dialog::DEFAULT_MAX_ROUNDS
}
fn default_k() -> usize {
    10
}

fn env_parse<T: std::str::FromStr>(name: &'static str, lookup: &impl Fn(&str) -> Option<String>) -> Result<Option<T>, ConfigError>
where
    T::Err: std::fmt::Display,
{
    match lookup(name) {
        None => Ok(None),
        Some(v) => v.parse().map(Some).map_err(|e: T::Err| ConfigError::Env { name, message: e.to_string() }),
    }
}

impl ServiceConfig {
    pub fn from_toml(text: &str, origin: &str) -> Result<Self, ConfigError> {
        toml::from_str(text).map_err(|e| ConfigError::Parse { path: origin.to_owned(), message: e.to_string() })
    }

    /// Reads `path`, resolves relative corpus paths against its directory and
    /// applies environment overrides.
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.display().to_string(), source })?;
        let mut cfg = Self::from_toml(&text, &path.display().to_string())?;
        if let Some(base) = path.parent() {
            for c in &mut cfg.corpora {
                for p in [&mut c.embeddings, &mut c.ids].into_iter().chain(c.thumbnails.as_mut()) {
                    if p.is_relative() {
                        *p = base.join(&*p);
                    }
                }
            }
        }
        cfg.apply_env(|k| std::env::var(k).ok())?;
        Ok(cfg)
    }

    pub fn apply_env(&mut self, lookup: impl Fn(&str) -> Option<String>) -> Result<(), ConfigError> {
        if let Some(b) = lookup(BIND_ENV) {
            self.bind = b;
        }
        if let Some(p) = env_parse(PORT_ENV, &lookup)? {
            self.port = p;
        }
        if let Some(t) = env_parse(TTL_ENV, &lookup)? {
            self.session_ttl_secs = t;
        }
        Ok(())
    }

    pub fn manager_config(&self) -> ManagerConfig {
        ManagerConfig { ttl: Duration::from_secs(self.session_ttl_secs), max_rounds: self.max_rounds, default_k: self.default_k }
    }

    /// Loads corpora and constructs backends. Remote clients block, so call
    /// this outside any async runtime.
    pub fn build_manager(&self) -> Result<SessionManager, ConfigError> {
        if self.corpora.is_empty() {
            return Err(ConfigError::Invalid("at least one corpus is required".into()));
        }
        let embedder = build_embedder(&self.embedder)?;
        let questioner = build_questioner(&self.questioner)?;
        let mut corpora = BTreeMap::new();
        for c in &self.corpora {
            let corpus = EmbeddingCorpus::load(&c.embeddings, &c.ids).map_err(|source| ConfigError::Corpus { name: c.name.clone(), source })?;
            if corpus.dim() != embedder.dim() {
                return Err(ConfigError::Invalid(format!(
                    "corpus {:?} has dimension {} but the embedder produces {}",
                    c.name,
                    corpus.dim(),
                    embedder.dim()
                )));
            }
            let thumbnails = match &c.thumbnails {
                Some(p) => load_thumbnails(p)?,
                None => HashMap::new(),
            };
            let entry = CorpusEntry { corpus: Arc::new(corpus), thumbnails };
            if corpora.insert(c.name.clone(), entry).is_some() {
                return Err(ConfigError::Invalid(format!("duplicate corpus name {:?}", c.name)));
            }
        }
        Ok(SessionManager::new(corpora, embedder, questioner, self.manager_config()))
    }
}

pub fn load_thumbnails(path: &Path) -> Result<HashMap<String, String>, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.display().to_string(), source })?;
    serde_json::from_str(&text).map_err(|e| ConfigError::Parse { path: path.display().to_string(), message: e.to_string() })
}
