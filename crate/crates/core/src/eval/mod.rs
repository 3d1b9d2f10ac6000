//! Retrieval evaluation over dialog rounds.
//!
//! For every example and round `i = 0..=rounds` the dialog prefix `D_i` is
//! serialized, embedded and ranked against the corpus. An example joins the
//! success pool the first round its target reaches the top `k`; no further
//! rounds are generated for it when the dialog is live and the ATR mode is
//! `carry_forward`. Hits@K at round `i` is the pool size over all evaluated
//! examples. Average target rank is taken over all examples at every round.

mod stats;

pub use stats::{average_target_rank, exact_repeats, repetition_stats, RepetitionStats};

use std::fmt;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backends::{Answerer, Embedder, Questioner};
use crate::corpus::DialogExample;
use crate::dialog::{serialize_dialog, truncate, Dialog, Round};
use crate::index::Retriever;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("no examples to evaluate")]
    NoExamples,
    #[error("all {0} examples failed")]
    AllFailed(usize),
    #[error("trace for {id:?} does not cover round {round}")]
    TraceTooShort { id: String, round: usize },
    #[error("traces have different lengths")]
    RaggedTraces,
    #[error("k = {k} out of range 1..={n}")]
    InvalidK { k: usize, n: usize },
    #[error("embedder produces {embedder}-dim vectors but the corpus is {corpus}-dim")]
    DimensionMismatch { embedder: usize, corpus: usize },
    #[error("thread pool: {0}")]
    Pool(String),
    #[error("{path}: {message}")]
    Io { path: String, message: String },
}

/// 1-based target ranks for rounds `0..=R`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RankTrace {
    pub image_id: String,
    pub ranks: Vec<usize>,
}

/// How ranks are tracked after an example enters the success pool.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AtrMode {
    /// Keep extending the dialog and ranking every round.
    Continue,
    /// Stop at the first hit and repeat the last rank.
    CarryForward,
}

impl fmt::Display for AtrMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Continue => "continue",
            Self::CarryForward => "carry_forward",
        })
    }
}

/// Where the rounds come from.
#[derive(Clone, Copy)]
pub enum DialogSource<'a> {
    /// Replay each example's stored rounds.
    Recorded,
    /// Generate rounds with a questioner that never sees the target and an
    /// answerer that does.
    Live { questioner: &'a dyn Questioner, answerer: &'a dyn Answerer },
}

impl DialogSource<'_> {
    pub fn name(&self) -> &'static str {
        match self {
            Self::Recorded => "recorded",
            Self::Live { .. } => "live",
        }
    }

    /// `continue` for recorded dialogs, `carry_forward` for live ones.
    pub fn default_atr_mode(&self) -> AtrMode {
        match self {
            Self::Recorded => AtrMode::Continue,
            Self::Live { .. } => AtrMode::CarryForward,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchmarkConfig {
    pub k: usize,
    pub rounds: usize,
    /// `None` picks the source's default.
    pub atr_mode: Option<AtrMode>,
    /// Examples evaluated concurrently.
    pub jobs: usize,
}

impl BenchmarkConfig {
    pub fn new(k: usize, rounds: usize) -> Self {
        Self { k, rounds, atr_mode: None, jobs: 1 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExampleResult {
    pub id: String,
    pub first_hit_round: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Failure {
    pub id: String,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub k: usize,
    pub rounds: usize,
    /// Examples evaluated; failed ones are excluded.
    pub n: usize,
    pub atr_mode: AtrMode,
    pub hits_curve: Vec<f64>,
    pub atr_curve: Vec<f64>,
    pub per_example: Vec<ExampleResult>,
    pub repetition: Option<RepetitionStats>,
    pub failures: Vec<Failure>,
}

impl EvalReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn write_json(&self, path: &Path) -> Result<(), EvalError> {
        std::fs::write(path, self.to_json() + "\n")
            .map_err(|e| EvalError::Io { path: path.display().to_string(), message: e.to_string() })
    }

    /// `round,hits_at_k,avg_target_rank` rows.
    pub fn curves_csv(&self) -> String {
        let mut out = String::from("round,hits_at_k,avg_target_rank\n");
        for (i, (h, a)) in self.hits_curve.iter().zip(&self.atr_curve).enumerate() {
            out.push_str(&format!("{i},{h},{a}\n"));
        }
        out
    }

    pub fn write_curves_csv(&self, path: &Path) -> Result<(), EvalError> {
        std::fs::write(path, self.curves_csv())
            .map_err(|e| EvalError::Io { path: path.display().to_string(), message: e.to_string() })
    }
}

/// Full output of a benchmark run: the report plus per-example traces and the
/// dialogs actually used.
#[derive(Debug, Clone)]
pub struct BenchmarkRun {
    pub report: EvalReport,
    pub traces: Vec<RankTrace>,
    pub dialogs: Vec<Dialog>,
}

/// Produces the target rank of one example at successive rounds.
trait RoundProbe {
    fn rank(&mut self, round: usize) -> Result<usize, String>;
}

struct Driven {
    ranks: Vec<usize>,
    first_hit: Option<usize>,
}

/// The stopping protocol shared by every source.
fn drive(probe: &mut dyn RoundProbe, k: usize, rounds: usize, mode: AtrMode) -> Result<Driven, String> {
    let mut ranks: Vec<usize> = Vec::with_capacity(rounds + 1);
    let mut first_hit = None;
    for round in 0..=rounds {
        if let (Some(_), AtrMode::CarryForward, Some(&last)) = (first_hit, mode, ranks.last()) {
            ranks.push(last);
            continue;
        }
        let rank = probe.rank(round)?;
        if first_hit.is_none() && rank <= k {
            first_hit = Some(round);
        }
        ranks.push(rank);
    }
    Ok(Driven { ranks, first_hit })
}

struct TraceProbe<'a>(&'a [usize]);

impl RoundProbe for TraceProbe<'_> {
    fn rank(&mut self, round: usize) -> Result<usize, String> {
        Ok(self.0[round])
    }
}

struct RetrievalProbe<'a> {
    target: &'a str,
    dialog: Dialog,
    embedder: &'a dyn Embedder,
    corpus: &'a dyn Retriever,
    /// Live backends; `None` replays `dialog` and carries the last rank past its end.
    live: Option<(&'a dyn Questioner, &'a dyn Answerer)>,
    last: Option<usize>,
}

impl RoundProbe for RetrievalProbe<'_> {
    fn rank(&mut self, round: usize) -> Result<usize, String> {
        match self.live {
            Some((questioner, answerer)) => {
                while self.dialog.rounds.len() < round {
                    // The questioner gets the dialog only.
                    let q = questioner.next_question(&self.dialog).map_err(|e| format!("round {round}: questioner: {e}"))?;
                    let a = answerer
                        .answer(&q, self.target, &self.dialog)
                        .map_err(|e| format!("round {round}: answerer: {e}"))?;
                    self.dialog.rounds.push(Round::new(q, a));
                }
            }
            None => {
                if round > self.dialog.rounds.len() {
                    return self.last.ok_or_else(|| "no rank to carry forward".to_owned());
                }
            }
        }
        let query = serialize_dialog(&self.dialog, round).map_err(|e| format!("round {round}: {e}"))?;
        let v = self.embedder.embed(&query).map_err(|e| format!("round {round}: embedder: {e}"))?;
        let rank = self.corpus.rank_of(&v, self.target).map_err(|e| format!("round {round}: index: {e}"))?;
        self.last = Some(rank);
        Ok(rank)
    }
}

struct Outcome {
    id: String,
    driven: Driven,
    dialog: Option<Dialog>,
}

fn aggregate(k: usize, rounds: usize, mode: AtrMode, outcomes: &[Outcome], failures: Vec<Failure>) -> Result<EvalReport, EvalError> {
    let n = outcomes.len();
    if n == 0 {
        return Err(if failures.is_empty() { EvalError::NoExamples } else { EvalError::AllFailed(failures.len()) });
    }
    let hits_curve = (0..=rounds)
        .map(|i| outcomes.iter().filter(|o| o.driven.first_hit.is_some_and(|h| h <= i)).count() as f64 / n as f64)
        .collect();
    let atr_curve = (0..=rounds)
        .map(|i| outcomes.iter().map(|o| o.driven.ranks[i] as u64).sum::<u64>() as f64 / n as f64)
        .collect();
    let dialogs: Vec<Dialog> = outcomes.iter().filter_map(|o| o.dialog.clone()).collect();
    let repetition = if dialogs.is_empty() { None } else { Some(repetition_stats(&dialogs)?) };
    Ok(EvalReport {
        k,
        rounds,
        n,
        atr_mode: mode,
        hits_curve,
        atr_curve,
        per_example: outcomes.iter().map(|o| ExampleResult { id: o.id.clone(), first_hit_round: o.driven.first_hit }).collect(),
        repetition,
        failures,
    })
}

/// Applies the stopping protocol to precomputed rank traces. All traces must
/// have the same length `rounds + 1`.
pub fn evaluate_traces(traces: &[RankTrace], k: usize, mode: AtrMode) -> Result<EvalReport, EvalError> {
    let len = traces.first().map(|t| t.ranks.len()).ok_or(EvalError::NoExamples)?;
    if len == 0 || traces.iter().any(|t| t.ranks.len() != len) {
        return Err(EvalError::RaggedTraces);
    }
    let rounds = len - 1;
    let outcomes: Vec<Outcome> = traces
        .iter()
        .map(|t| {
            let driven = drive(&mut TraceProbe(&t.ranks), k, rounds, mode).expect("trace probes never fail");
            Outcome { id: t.image_id.clone(), driven, dialog: None }
        })
        .collect();
    aggregate(k, rounds, mode, &outcomes, Vec::new())
}

pub fn run_benchmark(
    examples: &[DialogExample],
    corpus: &dyn Retriever,
    embedder: &dyn Embedder,
    source: DialogSource<'_>,
    config: &BenchmarkConfig,
) -> Result<EvalReport, EvalError> {
    run_benchmark_detailed(examples, corpus, embedder, source, config).map(|r| r.report)
}

pub fn run_benchmark_detailed(
    examples: &[DialogExample],
    corpus: &dyn Retriever,
    embedder: &dyn Embedder,
    source: DialogSource<'_>,
    config: &BenchmarkConfig,
) -> Result<BenchmarkRun, EvalError> {
    if examples.is_empty() {
        return Err(EvalError::NoExamples);
    }
    if config.k == 0 || config.k > corpus.len() {
        return Err(EvalError::InvalidK { k: config.k, n: corpus.len() });
    }
    if embedder.dim() != corpus.dim() {
        return Err(EvalError::DimensionMismatch { embedder: embedder.dim(), corpus: corpus.dim() });
    }
    let mode = config.atr_mode.unwrap_or(source.default_atr_mode());
    let live = match source {
        DialogSource::Recorded => None,
        DialogSource::Live { questioner, answerer } => Some((questioner, answerer)),
    };
    let evaluate = |example: &DialogExample| -> Result<Outcome, Failure> {
        let fail = |error: String| Failure { id: example.image_id.clone(), error };
        if !corpus.contains(&example.image_id) {
            return Err(fail("target not in corpus".into()));
        }
        let dialog = match live {
            Some(_) => Dialog::new(example.dialog.caption.clone()),
            None => truncate(&example.dialog, example.dialog.rounds.len().min(config.rounds)).map_err(|e| fail(e.to_string()))?,
        };
        let mut probe = RetrievalProbe { target: &example.image_id, dialog, embedder, corpus, live, last: None };
        let driven = drive(&mut probe, config.k, config.rounds, mode).map_err(fail)?;
        Ok(Outcome { id: example.image_id.clone(), driven, dialog: Some(probe.dialog) })
    };
    let results: Vec<Result<Outcome, Failure>> = if config.jobs <= 1 {
        examples.iter().map(evaluate).collect()
    } else {
        rayon::ThreadPoolBuilder::new()
            .num_threads(config.jobs)
            .build()
            .map_err(|e| EvalError::Pool(e.to_string()))?
            .install(|| examples.par_iter().map(evaluate).collect())
    };
    let mut outcomes = Vec::with_capacity(results.len());
    let mut failures = Vec::new();
    for r in results {
        match r {
            Ok(o) => outcomes.push(o),
            Err(f) => {
                tracing::warn!(id = %f.id, error = %f.error, "example failed");
                failures.push(f);
            }
        }
    }
    let report = aggregate(config.k, config.rounds, mode, &outcomes, failures)?;
    let traces = outcomes.iter().map(|o| RankTrace { image_id: o.id.clone(), ranks: o.driven.ranks.clone() }).collect();
    let dialogs = outcomes.into_iter().filter_map(|o| o.dialog).collect();
    Ok(BenchmarkRun { report, traces, dialogs })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backends::{BackendError, HashEmbedder, RecordedAnswerer, TemplateQuestioner};
    use crate::index::EmbeddingCorpus;

    fn trace(id: &str, ranks: &[usize]) -> RankTrace {
        RankTrace { image_id: id.into(), ranks: ranks.to_vec() }
    }

    #[test]
    fn stopping_example() {
        let traces = [trace("a", &[12, 8, 30, 40]), trace("b", &[3, 50, 60, 2]), trace("c", &[40, 55, 9, 11])];
        let r = evaluate_traces(&traces, 10, AtrMode::Continue).unwrap();
        let firsts: Vec<_> = r.per_example.iter().map(|e| e.first_hit_round).collect();
        assert_eq!(firsts, [Some(1), Some(0), Some(2)]);
        assert_eq!(r.hits_curve, [1.0 / 3.0, 2.0 / 3.0, 1.0, 1.0]);
        assert_eq!(r.atr_curve[0], (12 + 3 + 40) as f64 / 3.0);
        let carry = evaluate_traces(&traces, 10, AtrMode::CarryForward).unwrap();
        assert_eq!(carry.hits_curve, r.hits_curve);
        assert_eq!(carry.atr_curve[3], (8 + 3 + 9) as f64 / 3.0);
    }

    #[test]
    fn k_equal_n_always_hits() {
        let traces = [trace("a", &[5, 4]), trace("b", &[1, 5])];
        assert_eq!(evaluate_traces(&traces, 5, AtrMode::Continue).unwrap().hits_curve, [1.0, 1.0]);
    }

    #[test]
    fn ragged_traces_rejected() {
        assert!(matches!(evaluate_traces(&[trace("a", &[1]), trace("b", &[1, 2])], 1, AtrMode::Continue), Err(EvalError::RaggedTraces)));
        assert!(matches!(evaluate_traces(&[], 1, AtrMode::Continue), Err(EvalError::NoExamples)));
    }

    fn tiny() -> (EmbeddingCorpus, HashEmbedder, Vec<DialogExample>) {
        let e = HashEmbedder::new(64, 0).unwrap();
        let words = ["red", "blue", "green", "white"];
        let rows = words.iter().map(|w| e.embed_text(w).unwrap()).collect();
        let c = EmbeddingCorpus::build(words.iter().map(|w| w.to_string()).collect(), rows).unwrap();
        let ex = words
            .iter()
            .map(|w| DialogExample::new(*w, Dialog::with_rounds("a thing", vec![Round::new("color?", *w)])))
            .collect();
        (c, e, ex)
    }

    #[test]
    fn recorded_dialog_improves_ranks() {
        let (c, e, ex) = tiny();
        let r = run_benchmark(&ex, &c, &e, DialogSource::Recorded, &BenchmarkConfig::new(1, 1)).unwrap();
        assert_eq!(r.hits_curve[1], 1.0);
        assert_eq!(r.atr_curve[1], 1.0);
        assert_eq!(r.atr_mode, AtrMode::Continue);
        assert!(r.failures.is_empty());
    }

    #[test]
    fn recorded_shorter_than_rounds_carries_rank() {
        let (c, e, ex) = tiny();
        let run = run_benchmark_detailed(&ex, &c, &e, DialogSource::Recorded, &BenchmarkConfig::new(1, 3)).unwrap();
        assert!(run.traces.iter().all(|t| t.ranks[1..] == [1, 1, 1]));
    }

    #[test]
    fn unknown_target_is_excluded() {
        let (c, e, mut ex) = tiny();
        ex.push(DialogExample::new("purple", Dialog::new("a thing")));
        let r = run_benchmark(&ex, &c, &e, DialogSource::Recorded, &BenchmarkConfig::new(1, 1)).unwrap();
        assert_eq!(r.n, 4);
        assert_eq!(r.failures, vec![Failure { id: "purple".into(), error: "target not in corpus".into() }]);
        assert_eq!(r.hits_curve[1], 1.0);
    }

    struct Failing;
    impl Questioner for Failing {
        fn next_question(&self, _: &Dialog) -> Result<String, BackendError> {
            Err(BackendError::InvalidArgument("down".into()))
        }
    }

    #[test]
    fn live_stops_at_first_hit_and_reports_failures() {
        let (c, e, ex) = tiny();
        let answerer = RecordedAnswerer::new(ex.clone());
        let q = TemplateQuestioner::new(vec!["color?".into()]).unwrap();
        let src = DialogSource::Live { questioner: &q, answerer: &answerer };
        let run = run_benchmark_detailed(&ex, &c, &e, src, &BenchmarkConfig::new(1, 1)).unwrap();
        assert_eq!(run.report.atr_mode, AtrMode::CarryForward);
        assert_eq!(run.report.hits_curve[1], 1.0);
        // Item "red" is ranked first at round 0 by tie order, so its dialog never grows.
        assert_eq!(run.traces[0].ranks, [1, 1]);
        assert!(run.dialogs[0].rounds.is_empty());
        assert_eq!(run.dialogs[1].rounds.len(), 1);

        let failing = DialogSource::Live { questioner: &Failing, answerer: &answerer };
        let r = run_benchmark(&ex, &c, &e, failing, &BenchmarkConfig::new(1, 1)).unwrap();
        assert_eq!(r.n, 1);
        assert_eq!(r.failures.len(), 3);
        assert!(r.failures[0].error.contains("questioner"));
    }

    #[test]
    fn config_errors() {
        let (c, e, ex) = tiny();
        assert!(matches!(run_benchmark(&ex, &c, &e, DialogSource::Recorded, &BenchmarkConfig::new(5, 1)), Err(EvalError::InvalidK { .. })));
        let wrong = HashEmbedder::new(8, 0).unwrap();
        assert!(matches!(run_benchmark(&ex, &c, &wrong, DialogSource::Recorded, &BenchmarkConfig::new(1, 1)), Err(EvalError::DimensionMismatch { .. })));
        assert!(matches!(run_benchmark(&[], &c, &e, DialogSource::Recorded, &BenchmarkConfig::new(1, 1)), Err(EvalError::NoExamples)));
    }

    #[test]
    fn curves_csv_format() {
        let r = evaluate_traces(&[trace("a", &[2, 1])], 1, AtrMode::Continue).unwrap();
        assert_eq!(r.curves_csv(), "round,hits_at_k,avg_target_rank\n0,0,2\n1,1,1\n");
    }
}
