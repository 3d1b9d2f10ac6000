//! Session state machine, independent of HTTP.
//!
//! A session starts at round 0 with the caption embedded, the first top-k and
//! the first question pending. Each accepted answer closes the pending round,
//! re-embeds the dialog once, re-ranks once and asks the next question until
//! `max_rounds` is reached. Mutations of one session are strictly serialized:
//! a submit arriving while another is in flight is rejected, not queued.

use std::collections::{BTreeMap, HashMap};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::time::{Duration, Instant, SystemTime, UNIX_EPOCH};

use chatir_core::backends::{Embedder, Questioner};
use chatir_core::dialog::{serialize_dialog, Dialog, Round};
use chatir_core::index::Retriever;
use parking_lot::{Mutex, RwLock};
use serde::{Deserialize, Serialize};

use crate::error::ServiceError;

/// A searchable corpus plus optional thumbnail URLs by id.
#[derive(Clone)]
pub struct CorpusEntry {
    pub corpus: Arc<dyn Retriever>,
    pub thumbnails: HashMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub id: String,
    pub score: f32,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub thumbnail_url: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub round: usize,
    pub topk: Vec<Candidate>,
}

#[derive(Debug, Clone, Deserialize)]
pub struct CreateRequest {
    pub caption: String,
    #[serde(default)]
    pub k: Option<usize>,
    /// Instrumentation only: tracks the rank of a known target. Never reaches the questioner.
    #[serde(default)]
    pub target_id: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundResponse {
    pub session_id: String,
    pub round: usize,
    pub topk: Vec<Candidate>,
    /// `None` once the dialog has reached the round limit.
    pub question: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub target_rank: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionView {
    pub session_id: String,
    pub corpus: String,
    pub k: usize,
    pub round: usize,
    pub max_rounds: usize,
    pub dialog: Dialog,
    pub pending_question: Option<String>,
    pub snapshots: Vec<Snapshot>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub target_id: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rank_trace: Option<Vec<usize>>,
    pub created_at_ms: u64,
    pub last_active_ms: u64,
}

#[derive(Debug, Clone, Serialize)]
pub struct CorpusInfo {
    pub name: String,
    pub size: usize,
    pub dim: usize,
}

#[derive(Debug, Clone)]
pub struct ManagerConfig {
    pub ttl: Duration,
    pub max_rounds: usize,
    pub default_k: usize,
}

impl Default for ManagerConfig {
    fn default() -> Self {
        Self { ttl: Duration::from_secs(30 * 60), max_rounds: chatir_core::dialog::DEFAULT_MAX_ROUNDS, default_k: 10 }
    }
}

struct SessionState {
    corpus: String,
    k: usize,
    dialog: Dialog,
    pending_question: Option<String>,
    target_id: Option<String>,
    rank_trace: Vec<usize>,
    snapshots: Vec<Snapshot>,
    created_at: SystemTime,
    last_active: SystemTime,
    last_active_at: Instant,
    expired: bool,
}

struct Slot {
    busy: AtomicBool,
    state: Mutex<SessionState>,
}

/// Clears the in-flight flag when a submit finishes, however it ends.
struct BusyGuard<'a>(&'a AtomicBool);

impl Drop for BusyGuard<'_> {
    fn drop(&mut self) {
        self.0.store(false, Ordering::Release);
    }
}

pub struct SessionManager {
    corpora: BTreeMap<String, CorpusEntry>,
    embedder: Arc<dyn Embedder>,
    questioner: Arc<dyn Questioner>,
    sessions: RwLock<HashMap<String, Arc<Slot>>>,
    config: ManagerConfig,
}

fn unix_ms(t: SystemTime) -> u64 {
    t.duration_since(UNIX_EPOCH).map(|d| d.as_millis() as u64).unwrap_or(0)
}

struct Retrieved {
    topk: Vec<Candidate>,
    target_rank: Option<usize>,
}

impl SessionManager {
    pub fn new(
        corpora: BTreeMap<String, CorpusEntry>,
        embedder: Arc<dyn Embedder>,
        questioner: Arc<dyn Questioner>,
        config: ManagerConfig,
    ) -> Self {
        Self { corpora, embedder, questioner, sessions: RwLock::new(HashMap::new()), config }
    }

    pub fn config(&self) -> &ManagerConfig {
        &self.config
    }

    pub fn corpora(&self) -> Vec<CorpusInfo> {
        self.corpora
            .iter()
            .map(|(name, e)| CorpusInfo { name: name.clone(), size: e.corpus.len(), dim: e.corpus.dim() })
            .collect()
    }

    /// Embeds the first `round` rounds, ranks once, and resolves the target rank.
    fn retrieve(&self, entry: &CorpusEntry, dialog: &Dialog, round: usize, k: usize, target: Option<&str>) -> Result<Retrieved, ServiceError> {
        let query = serialize_dialog(dialog, round).map_err(|e| ServiceError::internal(e.to_string()))?;
        let v = self.embedder.embed(&query).map_err(|e| ServiceError::unavailable(format!("embedder: {e}")))?;
        let ranking = entry.corpus.search(&v, k).map_err(|e| ServiceError::internal(format!("search: {e}")))?;
        let target_rank = match target {
            Some(t) => Some(entry.corpus.rank_of(&v, t).map_err(|e| ServiceError::internal(format!("rank: {e}")))?),
            None => None,
        };
        let topk = ranking
            .entries
            .into_iter()
            .map(|s| Candidate { thumbnail_url: entry.thumbnails.get(&s.id).cloned(), id: s.id, score: s.score })
            .collect();
        Ok(Retrieved { topk, target_rank })
    }

    fn ask(&self, dialog: &Dialog) -> Result<Option<String>, ServiceError> {
        if dialog.rounds.len() >= self.config.max_rounds {
            return Ok(None);
        }
        let q = self.questioner.next_question(dialog).map_err(|e| ServiceError::unavailable(format!("questioner: {e}")))?;
        Ok(Some(q))
    }

    pub fn create_session(&self, corpus_name: &str, req: CreateRequest) -> Result<RoundResponse, ServiceError> {
        let entry = self
            .corpora
            .get(corpus_name)
            .ok_or_else(|| ServiceError::not_found(format!("unknown corpus {corpus_name:?}")))?;
        if req.caption.trim().is_empty() {
            return Err(ServiceError::bad_request("caption must not be empty"));
        }
        let n = entry.corpus.len();
        let k = req.k.unwrap_or(self.config.default_k.min(n));
        if k == 0 || k > n {
            return Err(ServiceError::bad_request(format!("k must be in 1..={n}")));
        }
        if let Some(t) = &req.target_id {
            if !entry.corpus.contains(t) {
                return Err(ServiceError::bad_request(format!("target_id {t:?} is not in corpus {corpus_name:?}")));
            }
        }
        let dialog = Dialog::new(req.caption);
        let got = self.retrieve(entry, &dialog, 0, k, req.target_id.as_deref())?;
        let question = self.ask(&dialog)?;

        let id = uuid::Uuid::new_v4().simple().to_string();
        let now = SystemTime::now();
        let state = SessionState {
            corpus: corpus_name.to_owned(),
            k,
            dialog,
            pending_question: question.clone(),
            target_id: req.target_id,
            rank_trace: got.target_rank.into_iter().collect(),
            snapshots: vec![Snapshot { round: 0, topk: got.topk.clone() }],
            created_at: now,
            last_active: now,
            last_active_at: Instant::now(),
            expired: false,
        };
        let slot = Arc::new(Slot { busy: AtomicBool::new(false), state: Mutex::new(state) });
        self.sessions.write().insert(id.clone(), slot);
        tracing::debug!(session = %id, corpus = corpus_name, "session created");
        Ok(RoundResponse { session_id: id, round: 0, topk: got.topk, question, target_rank: got.target_rank })
    }

    fn slot(&self, id: &str) -> Result<Arc<Slot>, ServiceError> {
        self.sessions.read().get(id).cloned().ok_or_else(|| ServiceError::not_found(format!("unknown session {id:?}")))
    }

    /// Marks the session expired when idle past the TTL.
    fn check_alive(&self, state: &mut SessionState) -> Result<(), ServiceError> {
        if !state.expired && state.last_active_at.elapsed() > self.config.ttl {
            state.expired = true;
            state.snapshots.clear();
            state.dialog.rounds.clear();
        }
        if state.expired {
            return Err(ServiceError::gone("session expired"));
        }
        Ok(())
    }

    pub fn submit_answer(&self, id: &str, answer: &str) -> Result<RoundResponse, ServiceError> {
        let slot = self.slot(id)?;
        if slot.busy.compare_exchange(false, true, Ordering::AcqRel, Ordering::Acquire).is_err() {
            return Err(ServiceError::conflict("another answer for this session is in flight"));
        }
        let _guard = BusyGuard(&slot.busy);

        let (dialog, corpus, k, target) = {
            let mut state = slot.state.lock();
            self.check_alive(&mut state)?;
            let question = state
                .pending_question
                .clone()
                .ok_or_else(|| ServiceError::conflict("no question is awaiting an answer"))?;
            if answer.trim().is_empty() {
                return Err(ServiceError::unprocessable("answer must not be empty"));
            }
            let mut dialog = state.dialog.clone();
            dialog.rounds.push(Round::new(question, answer.trim()));
            (dialog, state.corpus.clone(), state.k, state.target_id.clone())
        };

        // Backend calls run without holding the state lock; the busy flag keeps
        // other submits out.
        let entry = self.corpora.get(&corpus).ok_or_else(|| ServiceError::internal("session corpus vanished"))?;
        let round = dialog.rounds.len();
        let got = self.retrieve(entry, &dialog, round, k, target.as_deref())?;
        let question = self.ask(&dialog)?;

        let mut state = slot.state.lock();
        state.dialog = dialog;
        state.pending_question = question.clone();
        state.snapshots.push(Snapshot { round, topk: got.topk.clone() });
        if let Some(r) = got.target_rank {
            state.rank_trace.push(r);
        }
        state.last_active = SystemTime::now();
        state.last_active_at = Instant::now();
        Ok(RoundResponse { session_id: id.to_owned(), round, topk: got.topk, question, target_rank: got.target_rank })
    }

    pub fn get_session(&self, id: &str) -> Result<SessionView, ServiceError> {
        let slot = self.slot(id)?;
        let mut state = slot.state.lock();
        self.check_alive(&mut state)?;
        Ok(SessionView {
            session_id: id.to_owned(),
            corpus: state.corpus.clone(),
            k: state.k,
            round: state.dialog.rounds.len(),
            max_rounds: self.config.max_rounds,
            dialog: state.dialog.clone(),
            pending_question: state.pending_question.clone(),
            snapshots: state.snapshots.clone(),
            target_id: state.target_id.clone(),
            rank_trace: state.target_id.as_ref().map(|_| state.rank_trace.clone()),
            created_at_ms: unix_ms(state.created_at),
            last_active_ms: unix_ms(state.last_active),
        })
    }

    /// Expires idle sessions and forgets tombstones older than ten TTLs.
    /// Returns the number of sessions still live.
    pub fn sweep(&self) -> usize {
        let forget_after = self.config.ttl.saturating_mul(10);
        let mut sessions = self.sessions.write();
        sessions.retain(|_, slot| {
            let mut state = slot.state.lock();
            let _ = self.check_alive(&mut state);
            !(state.expired && state.last_active_at.elapsed() > forget_after)
        });
        sessions.values().filter(|s| !s.state.lock().expired).count()
    }
}
