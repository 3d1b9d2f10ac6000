#![allow(dead_code)]

use std::collections::BTreeMap;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};

use chatir_core::backends::{BackendError, Embedder, HashEmbedder, Questioner, TemplateQuestioner};
use chatir_core::dialog::{Dialog, SerializedQuery};
use chatir_core::index::{EmbeddingCorpus, IndexError, Ranking, Retriever};
use chatir_service::{CorpusEntry, ManagerConfig, SessionManager};

pub const DIM: usize = 64;

pub fn words() -> Vec<&'static str> {
    vec!["red", "blue", "green", "round", "square", "wooden", "metal", "small", "large", "striped", "dotted", "indoor"]
}

/// 200 items whose vectors hash three attribute words each.
pub fn corpus() -> EmbeddingCorpus {
    let e = HashEmbedder::new(DIM, 0).unwrap();
    let w = words();
    let mut ids = Vec::new();
    let mut rows = Vec::new();
    for i in 0..200usize {
        ids.push(format!("img-{i:03}"));
        let text = format!("{} {} {}", w[i % 12], w[(i / 12) % 12], w[(i * 7 + 3) % 12]);
        rows.push(e.embed_text(&text).unwrap());
    }
    EmbeddingCorpus::build(ids, rows).unwrap()
}

pub struct CountingEmbedder {
    pub inner: HashEmbedder,
    pub calls: AtomicUsize,
    /// When set, `embed` parks on this gate until released.
    pub gate: Mutex<Option<std::sync::mpsc::Receiver<()>>>,
    pub entered: Mutex<Option<std::sync::mpsc::Sender<()>>>,
}

impl CountingEmbedder {
    pub fn new() -> Self {
        Self { inner: HashEmbedder::new(DIM, 0).unwrap(), calls: AtomicUsize::new(0), gate: Mutex::new(None), entered: Mutex::new(None) }
    }
}

impl Embedder for CountingEmbedder {
    fn dim(&self) -> usize {
        DIM
    }
    fn embed(&self, q: &SerializedQuery) -> Result<Vec<f32>, BackendError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        let gate = self.gate.lock().unwrap().take();
        if let Some(rx) = gate {
            if let Some(tx) = self.entered.lock().unwrap().take() {
                tx.send(()).unwrap();
            }
            rx.recv().unwrap();
        }
        self.inner.embed(q)
    }
}

pub struct CountingRetriever {
    pub inner: EmbeddingCorpus,
    pub searches: AtomicUsize,
    pub rank_queries: AtomicUsize,
}

impl Retriever for CountingRetriever {
    fn dim(&self) -> usize {
        self.inner.dim()
    }
    fn len(&self) -> usize {
        self.inner.len()
    }
    fn contains(&self, id: &str) -> bool {
        self.inner.contains(id)
    }
    fn search(&self, q: &[f32], k: usize) -> Result<Ranking, IndexError> {
        self.searches.fetch_add(1, Ordering::SeqCst);
        self.inner.search(q, k)
    }
    fn rank_of(&self, q: &[f32], t: &str) -> Result<usize, IndexError> {
        self.rank_queries.fetch_add(1, Ordering::SeqCst);
        self.inner.rank_of(q, t)
    }
}

/// Records every dialog it is shown.
pub struct RecordingQuestioner {
    pub inner: TemplateQuestioner,
    pub seen: Mutex<Vec<Dialog>>,
}

impl RecordingQuestioner {
    pub fn new() -> Self {
        Self { inner: TemplateQuestioner::for_attributes(&["color", "shape", "material"]).unwrap(), seen: Mutex::new(Vec::new()) }
    }
}

impl Questioner for RecordingQuestioner {
    fn next_question(&self, d: &Dialog) -> Result<String, BackendError> {
        self.seen.lock().unwrap().push(d.clone());
        self.inner.next_question(d)
    }
}

pub struct DownQuestioner;

impl Questioner for DownQuestioner {
    fn next_question(&self, _: &Dialog) -> Result<String, BackendError> {
        Err(BackendError::Transport { endpoint: "http://llm.invalid".into(), attempts: 4, message: "connection refused".into() })
    }
}

pub struct Fixture {
    pub manager: Arc<SessionManager>,
    pub embedder: Arc<CountingEmbedder>,
    pub retriever: Arc<CountingRetriever>,
    pub questioner: Arc<RecordingQuestioner>,
}

pub fn fixture(config: ManagerConfig) -> Fixture {
    let embedder = Arc::new(CountingEmbedder::new());
    let retriever = Arc::new(CountingRetriever { inner: corpus(), searches: AtomicUsize::new(0), rank_queries: AtomicUsize::new(0) });
    let questioner = Arc::new(RecordingQuestioner::new());
    let mut corpora = BTreeMap::new();
    corpora.insert("demo".to_owned(), CorpusEntry { corpus: retriever.clone(), thumbnails: Default::default() });
    let manager = Arc::new(SessionManager::new(corpora, embedder.clone(), questioner.clone(), config));
    Fixture { manager, embedder, retriever, questioner }
}

pub fn manager_with_questioner(q: Arc<dyn Questioner>) -> SessionManager {
    let mut corpora = BTreeMap::new();
    corpora.insert("demo".to_owned(), CorpusEntry { corpus: Arc::new(corpus()), thumbnails: Default::default() });
    SessionManager::new(corpora, Arc::new(HashEmbedder::new(DIM, 0).unwrap()), q, ManagerConfig::default())
}
