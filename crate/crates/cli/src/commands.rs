use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use anyhow::{bail, Context, Result};
use chatir_core::backends::{build_answerer, build_embedder, build_questioner, AnswererRef, EmbedderRef, QuestionerRef};
use chatir_core::corpus::{
    apply_masking, augment_dialogues, generate_synthetic, load_examples, write_jsonl, AugmentInput, MaskingPolicy, SyntheticSpec,
};
use chatir_core::eval::{repetition_stats, run_benchmark, BenchmarkConfig, DialogSource};
use chatir_core::index::{read_ids, read_matrix, write_ids, write_matrix, EmbeddingCorpus, Retriever};
use chatir_core::trainer::{self, in_batch_recall, read_checkpoint, synthetic_pairs, write_checkpoint, write_history_csv};
use chatir_core::{Dialog, TrainerConfig};
use ndarray::Array2;
use serde_json::json;

use crate::backends::BackendsFile;
use crate::plot;
use crate::{AugmentArgs, EvalRunArgs, IndexBuildArgs, MaskArgs, PlotArgs, RepetitionsArgs, ServeArgs, SourceArg, SynthArgs, TrainArgs};

fn with_suffix(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

/// Prints to stdout; a closed pipe is not an error.
fn print_text(text: &str) {
    let _ = writeln!(std::io::stdout().lock(), "{text}");
}

fn print_json(value: &serde_json::Value) {
    print_text(&serde_json::to_string_pretty(value).expect("json value serializes"));
}

pub fn index_build(a: IndexBuildArgs) -> Result<()> {
    let raw = read_matrix(&a.embeddings)?;
    let ids = read_ids(&a.ids)?;
    let corpus = EmbeddingCorpus::from_flat(ids, raw.data, raw.dim)?;
    let out_ids = a.out_ids.unwrap_or_else(|| a.out.with_extension("ids"));
    corpus.save(&a.out, &out_ids)?;
    print_json(&json!({
        "n": corpus.len(),
        "dim": corpus.dim(),
        "matrix_bytes": corpus.matrix_bytes(),
        "embeddings": a.out,
        "ids": out_ids,
    }));
    Ok(())
}

pub fn eval_run(a: EvalRunArgs) -> Result<()> {
    let examples = load_examples(&a.dataset)?;
    let corpus = EmbeddingCorpus::load(&a.embeddings, &a.ids)?;
    let file = match &a.backends.backends {
        Some(p) => BackendsFile::load(p)?,
        None => BackendsFile::default(),
    };
    let embedder_ref = file.embedder.clone().unwrap_or(EmbedderRef::Stub { dim: corpus.dim(), seed: a.backends.embed_seed });
    let embedder = build_embedder(&embedder_ref)?;
    let live = match a.dialog_source {
        SourceArg::Recorded => None,
        SourceArg::Live => {
            let (Some(q), Some(ans)) = (&file.questioner, &file.answerer) else {
                bail!("--dialog-source live needs a questioner and an answerer in --backends");
            };
            Some((build_questioner(q)?, build_answerer(ans)?))
        }
    };
    let source = match &live {
        None => DialogSource::Recorded,
        Some((q, ans)) => DialogSource::Live { questioner: q.as_ref(), answerer: ans.as_ref() },
    };
    let jobs = a.jobs.unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    let config = BenchmarkConfig { atr_mode: a.atr_mode.map(Into::into), jobs, ..BenchmarkConfig::new(a.k, a.rounds) };
    let report = run_benchmark(&examples, &corpus, embedder.as_ref(), source, &config)?;
    report.write_json(&a.out)?;
    if let Some(c) = &a.curves {
        report.write_curves_csv(c)?;
    }
    for f in &report.failures {
        tracing::warn!(id = %f.id, error = %f.error, "example failed");
    }
    print_json(&json!({
        "n": report.n,
        "failures": report.failures.len(),
        "atr_mode": report.atr_mode.to_string(),
        "hits_at_k": report.hits_curve.last(),
        "avg_target_rank": report.atr_curve.last(),
        "out": a.out,
    }));
    Ok(())
}

fn trainer_config(a: &TrainArgs) -> Result<TrainerConfig> {
    let mut c = match &a.config {
        Some(p) => {
            let text = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            toml::from_str(&text).with_context(|| format!("parsing {}", p.display()))?
        }
        None if a.desk => TrainerConfig::desk(),
        None => TrainerConfig::default(),
    };
    if let Some(v) = a.epochs {
        c.epochs = v;
    }
    if let Some(v) = a.lr {
        c.learning_rate = v;
    }
    if let Some(v) = a.batch_size {
        c.batch_size = v;
    }
    if let Some(v) = a.seed {
        c.seed = v;
    }
    c.validate()?;
    Ok(c)
}

pub fn train(a: TrainArgs) -> Result<()> {
    let config = trainer_config(&a)?;
    let corpus = EmbeddingCorpus::load(&a.embeddings, &a.ids)?;
    let (features, positives) = match (&a.features, &a.positives, a.synthetic_pairs) {
        (Some(f), Some(p), _) => {
            let m = read_matrix(f)?;
            let x = Array2::from_shape_vec((m.rows, m.dim), m.data.into_iter().map(f64::from).collect())?;
            (x, read_ids(p)?)
        }
        (_, _, Some(n)) => synthetic_pairs(&corpus, n, a.feature_dim, a.noise, a.pairs_seed),
        _ => bail!("give --features with --positives, or --synthetic-pairs"),
    };
    let init = trainer::ProjectionHead::init(corpus.dim(), features.ncols(), config.seed);
    let before = in_batch_recall(&init, features.view(), &positives, &corpus, config.k)?;
    let outcome = trainer::train_from(init, features.view(), &positives, &corpus, &config)?;
    let after = in_batch_recall(&outcome.head, features.view(), &positives, &corpus, config.k)?;
    write_checkpoint(&a.out, &outcome.head)?;
    // Read back so a bad write fails here rather than at load time.
    read_checkpoint(&a.out)?;
    if let Some(h) = &a.history {
        write_history_csv(h, &outcome.history)?;
    }
    print_json(&json!({
        "pairs": positives.len(),
        "epochs": outcome.history.len(),
        "first_loss": outcome.history.first().map(|r| r.mean_loss),
        "last_loss": outcome.history.last().map(|r| r.mean_loss),
        "k": config.k,
        "recall_before": before,
        "recall_after": after,
        "out": a.out,
    }));
    Ok(())
}

pub fn serve(a: ServeArgs) -> Result<()> {
    let config = chatir_service::ServiceConfig::load(&a.config)?;
    // Remote backends use blocking clients: build them before the runtime.
    let manager = Arc::new(config.build_manager()?);
    if a.sweep_secs == 0 {
        bail!("--sweep-secs must be positive");
    }
    let runtime = tokio::runtime::Builder::new_multi_thread().enable_all().build().context("starting runtime")?;
    runtime.block_on(async {
        let listener = tokio::net::TcpListener::bind((config.bind.as_str(), config.port))
            .await
            .with_context(|| format!("binding {}:{}", config.bind, config.port))?;
        tracing::info!(addr = %listener.local_addr()?, corpora = manager.corpora().len(), "listening");
        chatir_service::serve(manager, listener, Duration::from_secs(a.sweep_secs)).await.context("serving")
    })
}

pub fn repetitions(a: RepetitionsArgs) -> Result<()> {
    let dialogs: Vec<Dialog> = load_examples(&a.dataset)?.into_iter().map(|e| e.dialog).collect();
    let stats = repetition_stats(&dialogs)?;
    let text = serde_json::to_string_pretty(&json!({ "dialogs": dialogs.len(), "stats": stats }))?;
    match &a.out {
        Some(p) => write_text(p, &(text + "\n")),
        None => {
            print_text(&text);
            Ok(())
        }
    }
}

pub fn mask(a: MaskArgs) -> Result<()> {
    let policy = MaskingPolicy::new(a.strategy, a.rate, a.seed)?;
    let examples = load_examples(&a.dataset)?;
    let masked = examples.iter().map(|e| apply_masking(e, &policy)).collect::<Result<Vec<_>, _>>()?;
    write_jsonl(&a.out, &masked)?;
    print_json(&json!({ "examples": masked.len(), "strategy": a.strategy.as_str(), "rate": a.rate, "seed": a.seed, "out": a.out }));
    Ok(())
}

pub fn synth(a: SynthArgs) -> Result<()> {
    let spec = SyntheticSpec {
        embedding_dim: a.dim,
        embedder_seed: a.embed_seed,
        ..SyntheticSpec::new(a.items, a.attributes, a.vocab, a.caption_attributes)
    };
    let world = generate_synthetic(&spec, a.seed)?;
    std::fs::create_dir_all(&a.out_dir).with_context(|| format!("creating {}", a.out_dir.display()))?;
    let dir = &a.out_dir;
    write_jsonl(&dir.join("dataset.jsonl"), &world.examples)?;
    write_matrix(&dir.join("embeddings.bin"), world.dim, &world.vectors)?;
    write_ids(&dir.join("embeddings.ids"), &world.ids)?;
    world.table.save(&dir.join("table.json"))?;
    let backends = BackendsFile {
        embedder: Some(EmbedderRef::Stub { dim: a.dim, seed: a.embed_seed }),
        questioner: Some(QuestionerRef::Template { questions: Vec::new(), attributes: world.question_order(a.caption_attributes) }),
        answerer: Some(AnswererRef::Oracle { table: "table.json".into() }),
    };
    write_text(&dir.join("backends.toml"), &backends.to_toml())?;
    print_json(&json!({ "items": world.ids.len(), "dim": world.dim, "examples": world.examples.len(), "out_dir": dir }));
    Ok(())
}

pub fn augment(a: AugmentArgs) -> Result<()> {
    let file = BackendsFile::load(&a.backends)?;
    let (Some(q), Some(ans)) = (&file.questioner, &file.answerer) else {
        bail!("{}: augmentation needs a questioner and an answerer", a.backends.display());
    };
    let (questioner, answerer) = (build_questioner(q)?, build_answerer(ans)?);
    let inputs: Vec<AugmentInput> = load_examples(&a.dataset)?.iter().map(AugmentInput::from).collect();
    let outcome = augment_dialogues(&inputs, questioner.as_ref(), answerer.as_ref(), a.rounds, a.jobs)?;
    let manifest = a.manifest.unwrap_or_else(|| with_suffix(&a.out, ".manifest.json"));
    outcome.write(&a.out, &manifest)?;
    print_json(&json!({
        "generated": outcome.examples.len(),
        "failed": outcome.failures.len(),
        "out": a.out,
        "manifest": manifest,
    }));
    Ok(())
}

pub fn plot_curves(a: PlotArgs) -> Result<()> {
    let points = plot::read_curves(&a.curves)?;
    let svg = plot::render_svg(&points, a.k)?;
    write_text(&a.out, &svg)
}
