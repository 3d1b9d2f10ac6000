//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any fails. Expected values come from oracles written here,
//! separately from the library code they check.

use std::collections::HashSet;
use std::time::{Duration, Instant};

use chatir_core::backends::{
    build_fewshot_prompt, build_unanswered_prompt, BackendError, Embedder, HashEmbedder, OracleAnswerer, PromptShot,
    TemplateQuestioner,
};
use chatir_core::corpus::{apply_masking, generate_synthetic, DialogExample, MaskStrategy, MaskingPolicy, SyntheticSpec};
use chatir_core::dialog::{Dialog, Round, SerializedQuery, MASK_TOKEN};
use chatir_core::eval::{
    evaluate_traces, exact_repeats, repetition_stats, run_benchmark, AtrMode, BenchmarkConfig, DialogSource, EvalReport,
    ExampleResult, RepetitionStats,
};
use chatir_core::index::{EmbeddingCorpus, IndexError, Ranking, Retriever};
use chatir_core::trainer::loss::{hard_recall_at_k, loss_from_scores, recall_surrogate_loss, SurrogateParams};
use chatir_core::trainer::{in_batch_recall, lr_schedule, synthetic_pairs, train, ProjectionHead, TrainerConfig};
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Vec<f32> {
    (0..rows * cols).map(|_| rng.random_range(-1.0f32..1.0)).collect()
}

fn ids(n: usize) -> Vec<String> {
    (0..n).map(|i| format!("img-{i:05}")).collect()
}

/// Full sort in f64 on the raw vectors: cosine descending, then index ascending.
fn brute_force_top(data: &[f32], d: usize, q: &[f32], k: usize) -> Vec<usize> {
    let qn = q.iter().map(|&x| f64::from(x).powi(2)).sum::<f64>().sqrt();
    let mut scored: Vec<(f64, usize)> = data
        .chunks_exact(d)
        .enumerate()
        .map(|(i, row)| {
            let rn = row.iter().map(|&x| f64::from(x).powi(2)).sum::<f64>().sqrt();
            let dot: f64 = row.iter().zip(q).map(|(&a, &b)| f64::from(a) * f64::from(b)).sum();
            (dot / (rn * qn), i)
        })
        .collect();
    scored.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    scored.into_iter().take(k).map(|(_, i)| i).collect()
}

fn ranking_oracle_equivalence() -> Outcome {
    let (n, d, k) = (10_000, 64, 10);
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let data = random_matrix(&mut rng, n, d);
    let queries: Vec<Vec<f32>> = (0..100).map(|_| random_matrix(&mut rng, 1, d)).collect();

    let start = Instant::now();
    let corpus = EmbeddingCorpus::from_flat(ids(n), data.clone(), d).map_err(|e| e.to_string())?;
    let rankings: Vec<Ranking> = queries.iter().map(|q| corpus.search(q, k)).collect::<Result<_, _>>().map_err(|e| e.to_string())?;
    let elapsed = start.elapsed();

    for (qi, (q, ranking)) in queries.iter().zip(&rankings).enumerate() {
        let expected: Vec<String> = brute_force_top(&data, d, q, k).into_iter().map(|i| format!("img-{i:05}")).collect();
        let got: Vec<&str> = ranking.ids().collect();
        ensure(got == expected, || format!("query {qi}: {got:?} != {expected:?}"))?;
    }
    ensure(elapsed < Duration::from_secs(5), || format!("took {elapsed:?}"))?;
    Ok(format!("100 queries, 10000x64, {:.0} ms", elapsed.as_secs_f64() * 1e3))
}

fn rank_topk_consistency() -> Outcome {
    let (n, d) = (2_000, 16);
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    let mut data = random_matrix(&mut rng, n, d);
    // Exact duplicates every tenth row, so ties are exercised.
    for i in (10..n).step_by(10) {
        let prev = data[(i - 1) * d..i * d].to_vec();
        data[i * d..(i + 1) * d].copy_from_slice(&prev);
    }
    let corpus = EmbeddingCorpus::from_flat(ids(n), data.clone(), d).map_err(|e| e.to_string())?;
    let mut violations = 0;
    for pair in 0..1_000 {
        let q = if pair % 2 == 0 {
            random_matrix(&mut rng, 1, d)
        } else {
            let r = rng.random_range(0..n);
            data[r * d..(r + 1) * d].to_vec()
        };
        let k = rng.random_range(1..=50);
        let target = format!("img-{:05}", rng.random_range(0..n));
        let rank = corpus.rank_of(&q, &target).map_err(|e| e.to_string())?;
        let top = corpus.search(&q, k).map_err(|e| e.to_string())?;
        let pos = top.position(&target);
        if (rank <= k) != pos.is_some() || pos.is_some_and(|p| p != rank) {
            violations += 1;
        }
    }
    ensure(violations == 0, || format!("{violations} violations"))?;
    Ok("1000 pairs, 0 violations".into())
}

/// Embeds to a one-element vector holding `round + 1`; the retriever below
/// maps it back to a scripted rank.
struct RoundEmbedder;

impl Embedder for RoundEmbedder {
    fn dim(&self) -> usize {
        1
    }
    fn embed(&self, q: &SerializedQuery) -> Result<Vec<f32>, BackendError> {
        Ok(vec![(q.round_index + 1) as f32])
    }
}

struct ScriptedRetriever {
    traces: Vec<Vec<usize>>,
}

impl Retriever for ScriptedRetriever {
    fn dim(&self) -> usize {
        1
    }
    fn len(&self) -> usize {
        self.traces.len()
    }
    fn contains(&self, id: &str) -> bool {
        id.strip_prefix('t').and_then(|i| i.parse::<usize>().ok()).is_some_and(|i| i < self.traces.len())
    }
    fn search(&self, _: &[f32], _: usize) -> Result<Ranking, IndexError> {
        unreachable!("benchmarks only ask for ranks")
    }
    fn rank_of(&self, q: &[f32], id: &str) -> Result<usize, IndexError> {
        let i: usize = id[1..].parse().map_err(|_| IndexError::UnknownId(id.into()))?;
        Ok(self.traces[i][q[0] as usize - 1])
    }
}

fn stopping_semantics() -> Outcome {
    let (n, rounds, k) = (1_000, 10, 10);
    let mut rng = ChaCha8Rng::seed_from_u64(303);
    let traces: Vec<Vec<usize>> = (0..n).map(|_| (0..=rounds).map(|_| rng.random_range(1..=60)).collect()).collect();
    let examples: Vec<DialogExample> = (0..n)
        .map(|i| {
            let rs = (0..rounds).map(|r| Round::new(format!("q{r}"), format!("a{r}"))).collect();
            DialogExample::new(format!("t{i}"), Dialog::with_rounds("c", rs))
        })
        .collect();
    let retriever = ScriptedRetriever { traces: traces.clone() };
    let report = run_benchmark(&examples, &retriever, &RoundEmbedder, DialogSource::Recorded, &BenchmarkConfig::new(k, rounds))
        .map_err(|e| e.to_string())?;

    let closed_form: Vec<f64> = (0..=rounds)
        .map(|i| traces.iter().filter(|t| *t[..=i].iter().min().unwrap() <= k).count() as f64 / n as f64)
        .collect();
    ensure(report.hits_curve == closed_form, || format!("{:?} != {closed_form:?}", report.hits_curve))?;
    ensure(report.hits_curve.windows(2).all(|w| w[0] <= w[1]), || "hits curve decreases".into())?;
    let rank_traces: Vec<_> = traces
        .iter()
        .enumerate()
        .map(|(i, t)| chatir_core::eval::RankTrace { image_id: format!("t{i}"), ranks: t.clone() })
        .collect();
    let from_traces = evaluate_traces(&rank_traces, k, AtrMode::Continue).map_err(|e| e.to_string())?;
    ensure(from_traces.hits_curve == closed_form, || "evaluate_traces disagrees".into())?;
    Ok(format!("1000 traces, hits[0]={:.3} hits[10]={:.3}", closed_form[0], closed_form[rounds]))
}

/// Separate implementation of the offline stubs: seeded FNV-1a token buckets,
/// f32 counts, sequential sums.
mod sim {
    const OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
    const PRIME: u64 = 0x0000_0100_0000_01b3;

    fn fnv(mut h: u64, bytes: &[u8]) -> u64 {
        for b in bytes {
            h = (h ^ *b as u64).wrapping_mul(PRIME);
        }
        h
    }

    pub fn embed(text: &str, dim: usize, seed: u64) -> Vec<f32> {
        let start = fnv(OFFSET, &seed.to_le_bytes());
        let mut v = vec![0f32; dim];
        for tok in text.split_whitespace() {
            v[(fnv(start, tok.as_bytes()) % dim as u64) as usize] += 1.0;
        }
        unit(&v)
    }

    pub fn unit(v: &[f32]) -> Vec<f32> {
        let mut ss = 0f32;
        for x in v {
            ss += x * x;
        }
        let norm = ss.sqrt();
        v.iter().map(|x| x / norm).collect()
    }

    pub fn dot(a: &[f32], b: &[f32]) -> f32 {
        let mut s = 0f32;
        for i in 0..a.len() {
            s += a[i] * b[i];
        }
        s
    }
}

fn end_to_end_synthetic() -> Outcome {
    let start = Instant::now();
    // Seed 3 keeps every value word out of the buckets of `[SEP]` and the
    // template words, which would otherwise swamp the target's own words.
    let spec = SyntheticSpec { embedding_dim: 256, embedder_seed: 3, ..SyntheticSpec::new(2_000, 5, 8, 0) };
    let (k, rounds) = (10, 10);
    let world = generate_synthetic(&spec, 7).map_err(|e| e.to_string())?;

    // Engine.
    let corpus = EmbeddingCorpus::from_flat(world.ids.clone(), world.vectors.clone(), world.dim).map_err(|e| e.to_string())?;
    let embedder = HashEmbedder::new(spec.embedding_dim, spec.embedder_seed).map_err(|e| e.to_string())?;
    let questioner = TemplateQuestioner::for_attributes(&world.question_order(0)).map_err(|e| e.to_string())?;
    let answerer = OracleAnswerer::new(world.table.clone());
    let config = BenchmarkConfig { jobs: 4, ..BenchmarkConfig::new(k, rounds) };
    let source = DialogSource::Live { questioner: &questioner, answerer: &answerer };
    let engine = run_benchmark(&world.examples, &corpus, &embedder, source, &config).map_err(|e| e.to_string())?;

    // Oracle.
    let names = world.table.names().to_vec();
    let items: Vec<(String, Vec<String>)> = world.table.items().map(|(id, v)| (id.to_owned(), v.to_vec())).collect();
    let rows: Vec<Vec<f32>> = items.iter().map(|(_, v)| sim::unit(&sim::embed(&v.join(" "), spec.embedding_dim, spec.embedder_seed))).collect();
    let simulate = |ex: &DialogExample| -> (Vec<usize>, Option<usize>, Vec<(String, String)>) {
        let t = items.iter().position(|(id, _)| *id == ex.image_id).expect("target in table");
        let mut qa: Vec<(String, String)> = Vec::new();
        let mut ranks = Vec::new();
        let mut first = None;
        for round in 0..=rounds {
            if first.is_some() {
                ranks.push(*ranks.last().unwrap());
                continue;
            }
            while qa.len() < round {
                let a = qa.len() % names.len();
                qa.push((format!("what {} is it?", names[a]), items[t].1[a].clone()));
            }
            let mut text = ex.dialog.caption.clone();
            for (q, a) in &qa {
                text += &format!(" [SEP] {q} [SEP] {a}");
            }
            let q = sim::unit(&sim::embed(&text, spec.embedding_dim, spec.embedder_seed));
            let st = sim::dot(&rows[t], &q);
            let ahead = rows
                .iter()
                .enumerate()
                .filter(|(j, r)| {
                    let s = sim::dot(r, &q);
                    s > st || (s == st && *j < t)
                })
                .count();
            let rank = ahead + 1;
            if rank <= k {
                first = Some(round);
            }
            ranks.push(rank);
        }
        (ranks, first, qa)
    };
    let sims: Vec<_> = std::thread::scope(|s| {
        let handles: Vec<_> =
            world.examples.chunks(500).map(|chunk| s.spawn(move || chunk.iter().map(simulate).collect::<Vec<_>>())).collect();
        handles.into_iter().flat_map(|h| h.join().unwrap()).collect()
    });

    let n = sims.len();
    let hits_curve: Vec<f64> =
        (0..=rounds).map(|i| sims.iter().filter(|(_, f, _)| f.is_some_and(|f| f <= i)).count() as f64 / n as f64).collect();
    let atr_curve: Vec<f64> = (0..=rounds).map(|i| sims.iter().map(|(r, _, _)| r[i] as u64).sum::<u64>() as f64 / n as f64).collect();
    let mut repeats = 0usize;
    let mut q_tokens = 0usize;
    let (mut a_tokens, mut answers) = (0usize, 0usize);
    for (_, _, qa) in &sims {
        let mut seen = HashSet::new();
        let mut toks = HashSet::new();
        for (q, a) in qa {
            if !seen.insert(q.trim()) {
                repeats += 1;
            }
            toks.extend(q.split_whitespace());
            a_tokens += a.split_whitespace().collect::<HashSet<_>>().len();
            answers += 1;
        }
        q_tokens += toks.len();
    }
    let oracle = EvalReport {
        k,
        rounds,
        n,
        atr_mode: AtrMode::CarryForward,
        hits_curve: hits_curve.clone(),
        atr_curve,
        per_example: world
            .examples
            .iter()
            .zip(&sims)
            .map(|(e, (_, f, _))| ExampleResult { id: e.image_id.clone(), first_hit_round: *f })
            .collect(),
        repetition: Some(RepetitionStats {
            avg_exact_repeats_per_dialog: repeats as f64 / n as f64,
            avg_unique_tokens_per_dialog: q_tokens as f64 / n as f64,
            avg_unique_tokens_per_answer: if answers == 0 { 0.0 } else { a_tokens as f64 / answers as f64 },
        }),
        failures: Vec::new(),
    };
    let elapsed = start.elapsed();

    let (a, b) = (engine.to_json(), oracle.to_json());
    if a != b {
        let line = a.lines().zip(b.lines()).position(|(x, y)| x != y).unwrap_or(0);
        return Err(format!("reports differ at line {}: engine {:?} oracle {:?}", line + 1, a.lines().nth(line), b.lines().nth(line)));
    }
    ensure(hits_curve[5] > hits_curve[0], || format!("hits[5]={} <= hits[0]={}", hits_curve[5], hits_curve[0]))?;
    ensure(elapsed < Duration::from_secs(60), || format!("took {elapsed:?}"))?;
    Ok(format!(
        "byte-identical ({} bytes), hits[0]={:.4} hits[5]={:.4} hits[10]={:.4}, {:.1} s",
        a.len(),
        hits_curve[0],
        hits_curve[5],
        hits_curve[10],
        elapsed.as_secs_f64()
    ))
}

fn unit_rows(rng: &mut ChaCha8Rng, b: usize, d: usize) -> Array2<f64> {
    let mut m = Array2::<f64>::from_shape_simple_fn((b, d), || rng.random_range(-1.0..1.0));
    for mut row in m.rows_mut() {
        let n: f64 = row.dot(&row).sqrt();
        row.mapv_inplace(|x| x / n);
    }
    m
}

fn surrogate_gradient() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(404);
    let eps = 1e-5;
    let mut worst = 0f64;
    for inst in 0..120 {
        let b = rng.random_range(4..=32);
        let d = rng.random_range(8..=64);
        let params = SurrogateParams {
            k: rng.random_range(1..b),
            tau_rank: rng.random_range(0.05..0.5),
            tau_recall: rng.random_range(0.5..2.0),
            rank_margin: 0.5,
        };
        let q = unit_rows(&mut rng, b, d);
        let t = unit_rows(&mut rng, b, d);
        let analytic = recall_surrogate_loss(q.view(), t.view(), &params).map_err(|e| e.to_string())?.grad;
        let scores = q.dot(&t.t());
        // Perturbing q[i][c] moves row i of the score matrix by eps * t[:, c].
        let loss_at = |i: usize, c: usize, delta: f64| {
            let mut s = scores.clone();
            for j in 0..b {
                s[[i, j]] += delta * t[[j, c]];
            }
            loss_from_scores(s.view(), &params).expect("valid batch").0
        };
        let mut max_err = 0f64;
        let mut max_grad = 0f64;
        for i in 0..b {
            for c in 0..d {
                let numeric = (loss_at(i, c, eps) - loss_at(i, c, -eps)) / (2.0 * eps);
                max_err = max_err.max((numeric - analytic[[i, c]]).abs());
                max_grad = max_grad.max(numeric.abs());
            }
        }
        ensure(max_grad > 1e-8, || format!("instance {inst}: vanishing gradient"))?;
        worst = worst.max(max_err / max_grad);
    }
    ensure(worst < 1e-4, || format!("max relative error {worst:.3e}"))?;

    // Zero-temperature limit.
    for batch in 0..50 {
        let b = rng.random_range(4..=32);
        let d = rng.random_range(8..=64);
        let k = rng.random_range(1..b);
        let q = unit_rows(&mut rng, b, d);
        let t = unit_rows(&mut rng, b, d);
        let params = SurrogateParams { k, tau_rank: 1e-12, tau_recall: 1e-12, rank_margin: 0.5 };
        let loss = recall_surrogate_loss(q.view(), t.view(), &params).map_err(|e| e.to_string())?.loss;
        let hard = hard_recall_at_k(q.view(), t.view(), k);
        ensure(loss == 1.0 - hard, || format!("batch {batch}: loss {loss} vs 1 - {hard}"))?;
    }
    Ok(format!("120 instances, max rel err {worst:.2e}; 50 zero-temperature batches exact"))
}

fn desk_training() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(505);
    let (n_images, d) = (500, 32);
    let corpus = EmbeddingCorpus::from_flat(ids(n_images), random_matrix(&mut rng, n_images, d), d).map_err(|e| e.to_string())?;
    let (x, pos) = synthetic_pairs(&corpus, 700, 48, 0.3, 11);
    let train_x = x.slice(ndarray::s![..500, ..]).to_owned();
    let held_x = x.slice(ndarray::s![500.., ..]).to_owned();
    let (train_pos, held_pos) = pos.split_at(500);

    let config = TrainerConfig::desk();
    let outcome = train(train_x.view(), train_pos, &corpus, &config).map_err(|e| e.to_string())?;
    let first = outcome.history[0].mean_loss;
    let last = outcome.history.last().unwrap().mean_loss;
    let untrained = ProjectionHead::init(d, 48, config.seed);
    let before = in_batch_recall(&untrained, held_x.view(), held_pos, &corpus, 10).map_err(|e| e.to_string())?;
    let after = in_batch_recall(&outcome.head, held_x.view(), held_pos, &corpus, 10).map_err(|e| e.to_string())?;

    ensure(outcome.history.len() == 50, || "expected 50 epochs".into())?;
    ensure(last <= 0.5 * first, || format!("loss {first:.4} -> {last:.4}"))?;
    ensure(after > before, || format!("held-out recall@10 {before:.3} -> {after:.3}"))?;
    Ok(format!("loss {first:.4} -> {last:.4}, held-out recall@10 {before:.3} -> {after:.3}"))
}

fn lr_schedule_values() -> Outcome {
    let c = TrainerConfig::default();
    let e0 = lr_schedule(&c, 0);
    let e1 = lr_schedule(&c, 1);
    ensure(e0 == 5e-5, || format!("epoch 0: {e0:e}"))?;
    // 5e-5 * 0.93 in binary floating point; equal to the decimal value to 1e-18.
    ensure((e1 - 4.65e-5).abs() <= 1e-18, || format!("epoch 1: {e1:e}"))?;
    let floor_at = (0..1_000).find(|&e| lr_schedule(&c, e) == 1e-6).ok_or("floor never reached")?;
    ensure((floor_at..5_000).all(|e| lr_schedule(&c, e) == 1e-6), || "floor not held".into())?;
    ensure((0..floor_at).all(|e| lr_schedule(&c, e) > 1e-6), || "floor reached early".into())?;
    Ok(format!("5e-5, {e1:e}, floor 1e-6 from epoch {floor_at}"))
}

fn masking_statistics() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(606);
    let word = |rng: &mut ChaCha8Rng| ["red", "bus", "tree", "two", "yes", "no", "dog", "sky"][rng.random_range(0..8)].to_owned();
    let phrase = |rng: &mut ChaCha8Rng, n: usize| (0..n).map(|_| word(rng)).collect::<Vec<_>>().join(" ");
    // 10,000 dialogs of 10 rounds with 5-token captions and 2-token answers.
    let examples: Vec<DialogExample> = (0..10_000)
        .map(|i| {
            let rounds = (0..10).map(|_| Round::new(phrase(&mut rng, 3), phrase(&mut rng, 2))).collect();
            DialogExample::new(format!("ex{i}"), Dialog::with_rounds(phrase(&mut rng, 5), rounds))
        })
        .collect();
    let mut summary = Vec::new();
    for strategy in [MaskStrategy::Captions, MaskStrategy::Questions, MaskStrategy::Answers, MaskStrategy::Rounds, MaskStrategy::Tokens] {
        let policy = MaskingPolicy::new(strategy, 0.2, 42).map_err(|e| e.to_string())?;
        let (mut masked, mut total, mut scope_violations) = (0usize, 0usize, 0usize);
        let mut i = 0;
        while total < 10_000 {
            let (orig, out) = (&examples[i], apply_masking(&examples[i], &policy).map_err(|e| e.to_string())?);
            i += 1;
            let cap_changed = out.dialog.caption != orig.dialog.caption;
            let q_changed = orig.dialog.rounds.iter().zip(&out.dialog.rounds).map(|(a, b)| a.question != b.question);
            let a_changed = orig.dialog.rounds.iter().zip(&out.dialog.rounds).map(|(a, b)| a.answer != b.answer);
            let (qs, as_): (Vec<bool>, Vec<bool>) = (q_changed.collect(), a_changed.collect());
            match strategy {
                MaskStrategy::Captions => {
                    scope_violations += usize::from(qs.iter().chain(&as_).any(|&c| c));
                    scope_violations += usize::from(cap_changed && out.dialog.caption != MASK_TOKEN);
                    masked += usize::from(cap_changed);
                    total += 1;
                }
                MaskStrategy::Questions => {
                    scope_violations += usize::from(cap_changed || as_.iter().any(|&c| c));
                    masked += qs.iter().filter(|&&c| c).count();
                    total += qs.len();
                }
                MaskStrategy::Answers => {
                    scope_violations += usize::from(cap_changed || qs.iter().any(|&c| c));
                    masked += as_.iter().filter(|&&c| c).count();
                    total += as_.len();
                }
                MaskStrategy::Rounds => {
                    scope_violations += usize::from(cap_changed) + qs.iter().zip(&as_).filter(|(q, a)| q != a).count();
                    masked += qs.iter().filter(|&&c| c).count();
                    total += qs.len();
                }
                MaskStrategy::Tokens => {
                    let mut texts = vec![(&orig.dialog.caption, &out.dialog.caption)];
                    for (a, b) in orig.dialog.rounds.iter().zip(&out.dialog.rounds) {
                        texts.push((&a.question, &b.question));
                        texts.push((&a.answer, &b.answer));
                    }
                    for (a, b) in texts {
                        let (ta, tb): (Vec<&str>, Vec<&str>) = (a.split_whitespace().collect(), b.split_whitespace().collect());
                        scope_violations += usize::from(ta.len() != tb.len());
                        for (x, y) in ta.iter().zip(&tb) {
                            scope_violations += usize::from(x != y && *y != MASK_TOKEN);
                            masked += usize::from(x != y);
                            total += 1;
                        }
                    }
                }
                MaskStrategy::None => unreachable!(),
            }
        }
        let rate = masked as f64 / total as f64;
        ensure((0.19..=0.21).contains(&rate), || format!("{strategy}: rate {rate:.4} over {total}"))?;
        ensure(scope_violations == 0, || format!("{strategy}: {scope_violations} scope violations"))?;

        let again: Vec<String> = examples[..200].iter().map(|e| apply_masking(e, &policy).unwrap().to_json_line()).collect();
        let first: Vec<String> = examples[..200].iter().map(|e| apply_masking(e, &policy).unwrap().to_json_line()).collect();
        ensure(again == first, || format!("{strategy}: not deterministic"))?;
        summary.push(format!("{strategy}={rate:.4}"));
    }
    Ok(summary.join(" "))
}

fn prompt_fidelity() -> Outcome {
    let shot = PromptShot::new(
        Dialog::with_rounds(
            "2 full grown zebras standing by a brick building with a steel door",
            vec![Round::new("is this picture in color?", "yes"), Round::new("do you see people?", "no")],
        ),
        "are the animals in a pen?",
    )
    .map_err(|e| e.to_string())?;
    let live = Dialog::with_rounds(
        "a group of people standing on a snowy slope",
        vec![
            Round::new("Are there any trees visible in the background of the image?", "no"),
            Round::new("How many people are in the group?", "four"),
        ],
    );
    let expected = "Ask a new question in the following dialog, assume that the questions are designed to help us retrieve this image from a large collection of images:
Caption: 2 full grown zebras standing by a brick building with a steel door
Question: is this picture in color?
Answer: yes
Question: do you see people?
Answer: no
Question: are the animals in a pen?

Caption: a group of people standing on a snowy slope
Question: Are there any trees visible in the background of the image?
Answer: no
Question: How many people are in the group?
Answer: four
Question:";
    let got = build_fewshot_prompt(&live, &[shot]);
    ensure(got == expected, || format!("few-shot prompt differs:\n{got}"))?;

    let caption = "a group of people standing on a snowy slope";
    let unanswered = build_unanswered_prompt(caption).map_err(|e| e.to_string())?;
    let expected = "Write 10 short questions about the image described by the following caption. Assume that the questions are designed to help us retrieve this image from a large collection of images: a group of people standing on a snowy slope";
    ensure(unanswered == expected, || format!("unanswered prompt differs: {unanswered}"))?;
    Ok(format!("few-shot {} bytes, unanswered {} bytes", got.len(), unanswered.len()))
}

fn repetition_statistics() -> Outcome {
    let dialog = |qs: &[&str], a: &str| Dialog::with_rounds("c", qs.iter().map(|q| Round::new(*q, a)).collect());
    let identical = dialog(&["is it red?"; 10], "yes");
    let distinct: Vec<String> = (0..10).map(|i| format!("question number {i}?")).collect();
    let distinct = dialog(&distinct.iter().map(String::as_str).collect::<Vec<_>>(), "no");
    // Hand-counted: "is it red?" x3 (2 repeats), "what color?" x2 (1 repeat),
    // one trimmed duplicate of "where?" (1 repeat), "Is it red?" differs by case.
    let mixed = dialog(
        &["is it red?", "what color?", "is it red?", "where?", " where? ", "Is it red?", "what color?", "is it red?", "how many?", "why?"],
        "a b b",
    );
    ensure(exact_repeats(&identical) == 9, || format!("identical: {}", exact_repeats(&identical)))?;
    ensure(exact_repeats(&distinct) == 0, || format!("distinct: {}", exact_repeats(&distinct)))?;
    ensure(exact_repeats(&mixed) == 4, || format!("mixed: {}", exact_repeats(&mixed)))?;

    let stats = repetition_stats(&[identical, distinct, mixed]).map_err(|e| e.to_string())?;
    // Question tokens: identical {is,it,red?}=3; distinct {question,number,0?..9?}=12;
    // mixed {is,it,red?,what,color?,where?,Is,how,many?,why?}=10.
    let expected = RepetitionStats {
        avg_exact_repeats_per_dialog: 13.0 / 3.0,
        avg_unique_tokens_per_dialog: 25.0 / 3.0,
        avg_unique_tokens_per_answer: 40.0 / 30.0,
    };
    ensure(stats == expected, || format!("{stats:?} != {expected:?}"))?;
    Ok("9 / 0 / 4 repeats; token averages exact".into())
}

type Criterion = (&'static str, fn() -> Outcome);

fn main() {
    let criteria: [Criterion; 10] = [
        ("ranking oracle equivalence", ranking_oracle_equivalence),
        ("rank/top-k consistency", rank_topk_consistency),
        ("stopping semantics", stopping_semantics),
        ("end-to-end synthetic report", end_to_end_synthetic),
        ("surrogate-loss gradient", surrogate_gradient),
        ("desk-scale training", desk_training),
        ("learning-rate schedule", lr_schedule_values),
        ("masking statistics", masking_statistics),
        ("prompt fidelity", prompt_fidelity),
        ("repetition statistics", repetition_statistics),
    ];
    let mut failed = 0;
    for (name, run) in criteria {
        match run() {
            Ok(detail) => println!("PASS  {name}: {detail}"),
            Err(why) => {
                failed += 1;
                println!("FAIL  {name}: {why}");
            }
        }
    }
    println!("{} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
