//! Operator surface: corpus building, variant emission, training,
//! evaluation, explanation, and the cross-organization experiment, all
//! deterministic in the configured seed.

mod commands;
mod config;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "propdetect", version, about = "Multi-modal propaganda identification pipeline")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Options shared by every subcommand.
#[derive(Args, Debug)]
struct Common {
    /// Flat `key = value` config file; command-line flags win.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Seed for every random choice in the command.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct ModelArgs {
    /// image, text, or multi.
    #[arg(long)]
    modality: Option<String>,
    /// residual, plain, branch, style, content, stylecontent, imagestructure.
    #[arg(long)]
    visual: Option<String>,
    /// original, tag, miss, or structure.
    #[arg(long)]
    variant: Option<String>,
    /// Square size images are resized to.
    #[arg(long)]
    image_size: Option<usize>,
    /// Fixed token-sequence length.
    #[arg(long)]
    seq_len: Option<usize>,
    /// Target subword vocabulary size.
    #[arg(long)]
    vocab_size: Option<usize>,
    #[arg(long)]
    text_layers: Option<usize>,
    #[arg(long)]
    text_heads: Option<usize>,
    #[arg(long)]
    text_d_model: Option<usize>,
}

#[derive(Args, Debug)]
struct TrainingArgs {
    #[arg(long)]
    learning_rate: Option<f64>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    max_epochs: Option<usize>,
    #[arg(long)]
    patience: Option<usize>,
    #[arg(long)]
    dropout: Option<f64>,
    /// Train the full epoch budget instead of stopping on stale validation F1.
    #[arg(long)]
    no_early_stop: bool,
}

#[derive(Args, Debug)]
struct BuildCorpusArgs {
    #[command(flatten)]
    common: Common,
    /// Raw input JSONL (id, org, timestamp, text, image?, english).
    #[arg(long)]
    input: Option<PathBuf>,
    /// Directory image paths are relative to (default: the input's directory).
    #[arg(long)]
    images: Option<PathBuf>,
    /// How many topic keywords to keep per organization.
    #[arg(long)]
    k_hashtags: Option<usize>,
    /// Inclusive date windows, "YYYY-MM-DD..YYYY-MM-DD".
    #[arg(long)]
    train_range: Option<String>,
    #[arg(long)]
    validation_range: Option<String>,
    #[arg(long)]
    continuous_range: Option<String>,
    #[arg(long)]
    delay_range: Option<String>,
}

#[derive(Args, Debug)]
struct VariantsArgs {
    #[command(flatten)]
    common: Common,
    /// Built corpus JSONL.
    #[arg(long)]
    corpus: Option<PathBuf>,
    /// original, tag, miss, or structure.
    #[arg(long)]
    variant: Option<String>,
}

#[derive(Args, Debug)]
struct TrainArgs {
    #[command(flatten)]
    common: Common,
    /// Built corpus JSONL.
    #[arg(long)]
    corpus: Option<PathBuf>,
    /// Directory image paths are relative to (default: the corpus directory).
    #[arg(long)]
    images: Option<PathBuf>,
    /// Sub-dataset to train on (IRA, Russian, Iranian); default when unique.
    #[arg(long)]
    dataset: Option<String>,
    #[command(flatten)]
    model: ModelArgs,
    #[command(flatten)]
    training: TrainingArgs,
}

#[derive(Args, Debug)]
struct EvaluateArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    #[arg(long)]
    corpus: Option<PathBuf>,
    #[arg(long)]
    images: Option<PathBuf>,
    #[arg(long)]
    dataset: Option<String>,
    /// Comma-separated test splits: continuous,delay.
    #[arg(long)]
    splits: Option<String>,
}

#[derive(Args, Debug)]
struct ExplainArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    #[arg(long)]
    corpus: Option<PathBuf>,
    #[arg(long)]
    images: Option<PathBuf>,
    /// Record id to explain.
    #[arg(long)]
    record: Option<String>,
    /// Class whose evidence to localize (default: 1, sponsored).
    #[arg(long)]
    target_class: Option<usize>,
}

#[derive(Args, Debug)]
struct XorgArgs {
    #[command(flatten)]
    common: Common,
    /// Built corpus JSONL holding three organizations.
    #[arg(long)]
    corpus: Option<PathBuf>,
    #[arg(long)]
    images: Option<PathBuf>,
    #[command(flatten)]
    model: ModelArgs,
    #[command(flatten)]
    training: TrainingArgs,
}

#[derive(Args, Debug)]
struct SynthArgs {
    #[command(flatten)]
    common: Common,
    /// multimodal, quadrant, xorg, or raw.
    #[arg(long)]
    kind: Option<String>,
    /// Total records (per organization for xorg).
    #[arg(long)]
    records: Option<usize>,
    #[arg(long)]
    image_size: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Build a balanced, deduplicated, temporally split corpus.
    BuildCorpus(BuildCorpusArgs),
    /// Emit one textual-variant column per record.
    Variants(VariantsArgs),
    /// Train a model on one sub-dataset and write the best checkpoint.
    Train(TrainArgs),
    /// Evaluate a checkpoint on the test splits.
    Evaluate(EvaluateArgs),
    /// Grad-CAM heatmap and word importance for one record.
    Explain(ExplainArgs),
    /// Cross-organization generalizability table.
    Xorg(XorgArgs),
    /// Generate synthetic fixture corpora.
    #[command(hide = true)]
    MakeSynthetic(SynthArgs),
}

fn main() -> anyhow::Result<()> {
    match Cli::parse().command {
        Command::BuildCorpus(args) => commands::build_corpus(args),
        Command::Variants(args) => commands::variants(args),
        Command::Train(args) => commands::train(args),
        Command::Evaluate(args) => commands::evaluate(args),
        Command::Explain(args) => commands::explain(args),
        Command::Xorg(args) => commands::xorg(args),
        Command::MakeSynthetic(args) => commands::make_synthetic(args),
    }
}
