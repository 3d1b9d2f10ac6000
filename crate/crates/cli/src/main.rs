//! `chatir`: index, evaluate, train, serve and prepare data.
//!
//! Exit status is 0 on success, 1 when the command fails, 2 on bad usage.

mod backends;
mod commands;
mod plot;

use std::path::PathBuf;
use std::process::ExitCode;

use chatir_core::eval::AtrMode;
use chatir_core::MaskStrategy;
use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "chatir", version, about = "Dialog-driven image retrieval")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Embedding corpus files.
    #[command(subcommand)]
    Index(IndexCommand),
    /// Retrieval benchmarks.
    #[command(subcommand)]
    Eval(EvalCommand),
    /// Train a projection head with the Recall@K surrogate loss.
    Train(TrainArgs),
    /// Run the session HTTP service.
    Serve(ServeArgs),
    /// Dataset statistics.
    #[command(subcommand)]
    Stats(StatsCommand),
    /// Dataset preparation.
    #[command(subcommand)]
    Corpus(CorpusCommand),
    /// Charts.
    #[command(subcommand)]
    Plot(PlotCommand),
}

#[derive(Debug, Subcommand)]
enum IndexCommand {
    /// Validate and normalize a raw embedding matrix.
    Build(IndexBuildArgs),
}

#[derive(Debug, Args)]
struct IndexBuildArgs {
    /// Raw matrix (CIRE format).
    #[arg(long)]
    embeddings: PathBuf,
    /// One image id per line, in row order.
    #[arg(long)]
    ids: PathBuf,
    /// Normalized matrix output.
    #[arg(long)]
    out: PathBuf,
    /// Id list output; defaults to `--out` with an `.ids` extension.
    #[arg(long)]
    out_ids: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
enum EvalCommand {
    /// Hits@K with stopping and average target rank over a dataset.
    Run(EvalRunArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum SourceArg {
    Recorded,
    Live,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum AtrModeArg {
    Continue,
    CarryForward,
}

impl From<AtrModeArg> for AtrMode {
    fn from(a: AtrModeArg) -> Self {
        match a {
            AtrModeArg::Continue => AtrMode::Continue,
            AtrModeArg::CarryForward => AtrMode::CarryForward,
        }
    }
}

#[derive(Debug, Args)]
struct EvalRunArgs {
    /// JSON Lines examples or a VisDial-style JSON file.
    #[arg(long)]
    dataset: PathBuf,
    #[arg(long)]
    embeddings: PathBuf,
    #[arg(long)]
    ids: PathBuf,
    #[arg(long)]
    k: usize,
    #[arg(long)]
    rounds: usize,
    #[arg(long, value_enum)]
    dialog_source: SourceArg,
    /// Report JSON.
    #[arg(long)]
    out: PathBuf,
    /// Per-round curves CSV.
    #[arg(long)]
    curves: Option<PathBuf>,
    /// Examples evaluated concurrently; defaults to the number of CPUs.
    #[arg(long)]
    jobs: Option<usize>,
    /// Defaults to `continue` for recorded dialogs and `carry-forward` for live ones.
    #[arg(long, value_enum)]
    atr_mode: Option<AtrModeArg>,
    #[command(flatten)]
    backends: BackendArgs,
}

#[derive(Debug, Args)]
struct BackendArgs {
    /// TOML with `[embedder]`, `[questioner]` and `[answerer]` tables.
    #[arg(long)]
    backends: Option<PathBuf>,
    /// Seed of the hashing embedder used when no embedder is configured.
    #[arg(long, default_value_t = 0)]
    embed_seed: u64,
}

#[derive(Debug, Args)]
struct TrainArgs {
    #[arg(long)]
    embeddings: PathBuf,
    #[arg(long)]
    ids: PathBuf,
    /// Dialog feature matrix (CIRE format), one row per training pair.
    #[arg(long, requires = "positives", conflicts_with = "synthetic_pairs")]
    features: Option<PathBuf>,
    /// Positive image id per feature row.
    #[arg(long, requires = "features")]
    positives: Option<PathBuf>,
    /// Train on this many generated pairs instead of `--features`.
    #[arg(long, required_unless_present = "features")]
    synthetic_pairs: Option<usize>,
    #[arg(long, default_value_t = 48)]
    feature_dim: usize,
    #[arg(long, default_value_t = 0.3)]
    noise: f64,
    #[arg(long, default_value_t = 0)]
    pairs_seed: u64,
    /// Trainer settings TOML; missing keys take defaults.
    #[arg(long, conflicts_with = "desk")]
    config: Option<PathBuf>,
    /// Small-batch preset for desk-scale runs.
    #[arg(long)]
    desk: bool,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Checkpoint output (CIRW format).
    #[arg(long)]
    out: PathBuf,
    /// `epoch,lr,mean_loss` CSV.
    #[arg(long)]
    history: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ServeArgs {
    /// Service TOML.
    #[arg(long)]
    config: PathBuf,
    /// Seconds between expiry sweeps.
    #[arg(long, default_value_t = 60)]
    sweep_secs: u64,
}

#[derive(Debug, Subcommand)]
enum StatsCommand {
    /// Question repetition and vocabulary statistics.
    Repetitions(RepetitionsArgs),
}

#[derive(Debug, Args)]
struct RepetitionsArgs {
    #[arg(long)]
    dataset: PathBuf,
    /// JSON output; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
enum CorpusCommand {
    /// Replace dialog parts with the mask token.
    Mask(MaskArgs),
    /// Generate a synthetic attribute world with scripted dialogs.
    Synth(SynthArgs),
    /// Generate dialogs with a questioner and an answerer.
    Augment(AugmentArgs),
}

#[derive(Debug, Args)]
struct MaskArgs {
    #[arg(long)]
    dataset: PathBuf,
    /// none, captions, questions, answers, rounds or tokens.
    #[arg(long)]
    strategy: MaskStrategy,
    #[arg(long, default_value_t = 0.2)]
    rate: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// JSON Lines output.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct SynthArgs {
    #[arg(long)]
    items: usize,
    #[arg(long)]
    attributes: usize,
    #[arg(long)]
    vocab: usize,
    /// Attribute values revealed by the caption.
    #[arg(long, default_value_t = 0)]
    caption_attributes: usize,
    #[arg(long, default_value_t = 256)]
    dim: usize,
    #[arg(long, default_value_t = 0)]
    embed_seed: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Receives dataset.jsonl, embeddings.bin, embeddings.ids, table.json and backends.toml.
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Debug, Args)]
struct AugmentArgs {
    /// Examples whose captions seed the new dialogs.
    #[arg(long)]
    dataset: PathBuf,
    /// Must configure a questioner and an answerer.
    #[arg(long)]
    backends: PathBuf,
    #[arg(long, default_value_t = chatir_core::dialog::DEFAULT_MAX_ROUNDS)]
    rounds: usize,
    #[arg(long, default_value_t = 1)]
    jobs: usize,
    #[arg(long)]
    out: PathBuf,
    /// Failure manifest; defaults to `--out` with a `.manifest.json` suffix.
    #[arg(long)]
    manifest: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
enum PlotCommand {
    /// Render a curves CSV from `eval run --curves` as an SVG chart.
    Curves(PlotArgs),
}

#[derive(Debug, Args)]
struct PlotArgs {
    #[arg(long)]
    curves: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// K shown in the Hits@K title.
    #[arg(long)]
    k: Option<usize>,
}

fn init_tracing(default: &str) {
    let filter = tracing_subscriber::EnvFilter::try_from_default_env()
        .unwrap_or_else(|_| tracing_subscriber::EnvFilter::new(default));
    tracing_subscriber::fmt().with_env_filter(filter).with_writer(std::io::stderr).init();
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    init_tracing(if matches!(cli.command, Command::Serve(_)) { "info" } else { "warn" });
    let result = match cli.command {
        Command::Index(IndexCommand::Build(a)) => commands::index_build(a),
        Command::Eval(EvalCommand::Run(a)) => commands::eval_run(a),
        Command::Train(a) => commands::train(a),
        Command::Serve(a) => commands::serve(a),
        Command::Stats(StatsCommand::Repetitions(a)) => commands::repetitions(a),
        Command::Corpus(CorpusCommand::Mask(a)) => commands::mask(a),
        Command::Corpus(CorpusCommand::Synth(a)) => commands::synth(a),
        Command::Corpus(CorpusCommand::Augment(a)) => commands::augment(a),
        Command::Plot(PlotCommand::Curves(a)) => commands::plot_curves(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
