use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use propdetect::corpus::{
    self, CorpusRecord, Org, Split, SplitSpec, TweetRecord,
};
use propdetect::evaluation::{self, EvalReport, OrgDataset};
use propdetect::explain;
use propdetect::model::{
    load_checkpoint, save_checkpoint, CheckpointMeta, HorizontalEdgeProvider, Modality,
    ModelSpec, TextEncoderConfig, VisualExtractorKind,
};
use propdetect::textvariants::{apply_variant, VariantKind};
use propdetect::raster;
use propdetect::synthetic::{self, SyntheticOptions};
use propdetect::tokenizer::{build_vocab, Vocab};
use propdetect::training::{self, prepare_sample, prepare_samples, TrainConfig, TrainSample};

use crate::config::{csv_field, RunConfig};
use crate::{
    BuildCorpusArgs, EvaluateArgs, ExplainArgs, SynthArgs, TrainArgs, VariantsArgs, XorgArgs,
};

// ── Shared resolution helpers ───────────────────────────────────────────

fn out_dir(cfg: &RunConfig, flag: Option<&PathBuf>) -> Result<PathBuf> {
    cfg.required_path("out", flag)
}

fn seed_of(cfg: &RunConfig, flag: Option<u64>) -> Result<u64> {
    cfg.parse_or("seed", flag, 7u64)
}

/// Modality/extractor/variant plus encoder dimensions into a ModelSpec.
fn resolve_spec(cfg: &RunConfig, args: &crate::ModelArgs, vocab_size: usize) -> Result<ModelSpec> {
    let modality = Modality::parse(
        &cfg.string("modality", args.modality.as_ref()).unwrap_or_else(|| "multi".into()),
    )?;
    let visual = if modality.uses_image() {
        Some(VisualExtractorKind::parse(
            &cfg.string("visual", args.visual.as_ref()).unwrap_or_else(|| "residual".into()),
        )?)
    } else {
        None
    };
    let variant = VariantKind::parse(
        &cfg.string("variant", args.variant.as_ref()).unwrap_or_else(|| "original".into()),
    )?;
    let text = if modality.uses_text() {
        Some(TextEncoderConfig {
            layers: cfg.parse_or("text_layers", args.text_layers, 2)?,
            heads: cfg.parse_or("text_heads", args.text_heads, 4)?,
            d_model: cfg.parse_or("text_d_model", args.text_d_model, 64)?,
            n: cfg.parse_or("seq_len", args.seq_len, 48)?,
            vocab_size,
        })
    } else {
        None
    };
    let spec = ModelSpec {
        modality,
        visual,
        text,
        image_size: cfg.parse_or("image_size", args.image_size, 64)?,
        variant,
    };
    spec.validate()?;
    Ok(spec)
}

fn resolve_training(cfg: &RunConfig, args: &crate::TrainingArgs, seed: u64) -> Result<TrainConfig> {
    let train_cfg = TrainConfig {
        learning_rate: cfg.parse_or("learning_rate", args.learning_rate, 0.05)?,
        batch_size: cfg.parse_or("batch_size", args.batch_size, 32)?,
        max_epochs: cfg.parse_or("max_epochs", args.max_epochs, 50)?,
        patience: cfg.parse_or("patience", args.patience, 5)?,
        seed,
        dropout: cfg.parse_or("dropout", args.dropout, 0.1)?,
        early_stop: !cfg.flag_set("no_early_stop", args.no_early_stop)?,
    };
    train_cfg.validate()?;
    Ok(train_cfg)
}

/// Short tag naming a model configuration in output file names.
fn model_tag(spec: &ModelSpec) -> String {
    match spec.modality {
        Modality::ImageOnly => format!("image-{}", spec.visual.unwrap().as_str()),
        Modality::TextOnly => format!("text-{}", spec.variant.as_str()),
        Modality::MultiModal => {
            format!("multi-{}-{}", spec.visual.unwrap().as_str(), spec.variant.as_str())
        }
    }
}

/// Records of one sub-dataset; `wanted = None` requires the corpus to hold
/// exactly one dataset.
fn dataset_records(
    records: Vec<CorpusRecord>,
    wanted: Option<&String>,
) -> Result<(Org, Vec<CorpusRecord>)> {
    let datasets: BTreeSet<Org> = records.iter().map(|r| r.dataset).collect();
    let target = match wanted {
        Some(name) => Org::parse(name)?,
        None => {
            if datasets.len() != 1 {
                bail!(
                    "corpus holds {} datasets; pick one with --dataset",
                    datasets.len()
                );
            }
            *datasets.iter().next().unwrap()
        }
    };
    let subset: Vec<CorpusRecord> =
        records.into_iter().filter(|r| r.dataset == target).collect();
    if subset.is_empty() {
        bail!("corpus has no records for dataset {}", target.as_str());
    }
    Ok((target, subset))
}

fn by_split(records: &[CorpusRecord], split: Split) -> Vec<CorpusRecord> {
    records.iter().filter(|r| r.split == split).cloned().collect()
}

fn load_vocab_for(model_spec: &ModelSpec, checkpoint: &Path, meta: &CheckpointMeta) -> Result<Option<Vocab>> {
    if !model_spec.modality.uses_text() {
        return Ok(None);
    }
    let name = meta
        .vocab_ref
        .as_ref()
        .context("checkpoint lacks a vocabulary reference")?;
    let dir = checkpoint.parent().unwrap_or_else(|| Path::new("."));
    Ok(Some(Vocab::load(&dir.join(name))?))
}

fn write_metrics_csv(path: &Path, rows: &[(String, String, EvalReport)]) -> Result<()> {
    let mut out =
        String::from("model,split,accuracy,precision,recall,f1,auc,tpr_at_zero_fpr\n");
    for (model, split, r) in rows {
        writeln!(
            out,
            "{},{},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6}",
            csv_field(model),
            split,
            r.accuracy,
            r.precision,
            r.recall,
            r.f1,
            r.auc,
            r.tpr_at_zero_fpr
        )?;
    }
    std::fs::write(path, out)?;
    Ok(())
}

fn write_roc_csv(path: &Path, roc: &[(f64, f64)]) -> Result<()> {
    let mut out = String::from("fpr,tpr\n");
    for (fpr, tpr) in roc {
        writeln!(out, "{fpr:.6},{tpr:.6}")?;
    }
    std::fs::write(path, out)?;
    Ok(())
}

// ── build-corpus ────────────────────────────────────────────────────────

pub fn build_corpus(args: BuildCorpusArgs) -> Result<()> {
    let cfg = RunConfig::load(args.common.config.as_deref())?;
    let input = cfg.required_path("input", args.input.as_ref())?;
    let image_dir = cfg
        .path("images", args.images.as_ref())
        .unwrap_or_else(|| input.parent().unwrap_or_else(|| Path::new(".")).to_path_buf());
    let out = out_dir(&cfg, args.common.out.as_ref())?;
    let seed = seed_of(&cfg, args.common.seed)?;
    let k = cfg.parse_or("k_hashtags", args.k_hashtags, 15usize)?;
    if k == 0 {
        bail!("k_hashtags must be at least 1");
    }
    let split_spec: SplitSpec = cfg.split_spec(
        args.train_range.as_ref(),
        args.validation_range.as_ref(),
        args.continuous_range.as_ref(),
        args.delay_range.as_ref(),
    )?;

    let raw = corpus::read_input_jsonl(&input)?;

    // English-only ingestion; hash every referenced image once.
    let mut tweets: Vec<TweetRecord> = Vec::with_capacity(raw.len());
    for record in raw.into_iter().filter(|r| r.english) {
        let mut tweet = TweetRecord::new(record.id, record.org, record.timestamp, record.text);
        if let Some(rel) = record.image {
            let raster = raster::load_image(&image_dir.join(&rel))?;
            let hash = corpus::image_hash(&raster.to_gray());
            tweet = tweet.with_image(rel.into(), hash);
        }
        tweets.push(tweet);
    }

    let orgs: BTreeSet<Org> =
        tweets.iter().map(|t| t.org).filter(|&o| o != Org::Background).collect();
    if orgs.is_empty() {
        bail!("input holds no sponsored organizations");
    }
    let background: Vec<TweetRecord> =
        tweets.iter().filter(|t| t.org == Org::Background).cloned().collect();

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut all_records: Vec<CorpusRecord> = Vec::new();
    let mut stats = String::new();
    writeln!(stats, "dataset,split,sponsored,non_sponsored,total")?;
    let mut keyword_report = String::new();

    for (org_index, org) in orgs.iter().enumerate() {
        rng.set_stream(org_index as u64 + 1);
        let positives: Vec<TweetRecord> =
            tweets.iter().filter(|t| t.org == *org).cloned().collect();

        let positives = corpus::dedup(positives);
        let negatives = corpus::dedup(background.clone());
        let negatives = corpus::purge_positives_from_negatives(negatives, &positives);

        let keywords = corpus::top_k_hashtags(&positives, k);
        writeln!(keyword_report, "[keywords {}]", org.as_str())?;
        for (tag, score) in &keywords {
            writeln!(keyword_report, "{},{score:.6}", csv_field(tag))?;
        }
        let keyword_list: Vec<String> = keywords.iter().map(|(t, _)| t.clone()).collect();
        if keyword_list.is_empty() {
            eprintln!(
                "warning: dataset {} has no hashtags; keyword filter keeps nothing",
                org.as_str()
            );
            continue;
        }
        let positives = corpus::filter_by_keywords(positives, &keyword_list)?;
        let negatives = corpus::filter_by_keywords(negatives, &keyword_list)?;

        let balanced = corpus::balanced_monthly_sample(positives, negatives, &mut rng);
        if balanced.is_empty() {
            eprintln!(
                "warning: dataset {} is empty after balanced sampling",
                org.as_str()
            );
        }
        let splits = corpus::split_temporal(balanced, &split_spec)?;
        for (split, records) in [
            (Split::Train, &splits.train),
            (Split::Validation, &splits.validation),
            (Split::Continuous, &splits.continuous),
            (Split::Delay, &splits.delay),
        ] {
            let sponsored =
                records.iter().filter(|r| r.label() == corpus::Label::Sponsored).count();
            writeln!(
                stats,
                "{},{},{},{},{}",
                org.as_str(),
                split.as_str(),
                sponsored,
                records.len() - sponsored,
                records.len()
            )?;
            for r in records {
                all_records.push(CorpusRecord::from_tweet(r, *org, split));
            }
        }
    }

    std::fs::create_dir_all(&out)?;
    corpus::write_corpus_jsonl(&out.join("corpus.jsonl"), &all_records)?;
    std::fs::write(&out.join("stats.txt"), format!("{stats}\n{keyword_report}"))?;
    println!("wrote {} records to {}", all_records.len(), out.join("corpus.jsonl").display());
    Ok(())
}

// ── variants ────────────────────────────────────────────────────────────

pub fn variants(args: VariantsArgs) -> Result<()> {
    let cfg = RunConfig::load(args.common.config.as_deref())?;
    let corpus_path = cfg.required_path("corpus", args.corpus.as_ref())?;
    let out = out_dir(&cfg, args.common.out.as_ref())?;
    let kind = VariantKind::parse(
        &cfg.string("variant", args.variant.as_ref()).unwrap_or_else(|| "original".into()),
    )?;

    let records = corpus::read_corpus_jsonl(&corpus_path)?;
    std::fs::create_dir_all(&out)?;
    let mut lines = String::new();
    for record in &records {
        let mut value = serde_json::to_value(record)?;
        value["variant"] = serde_json::Value::String(kind.as_str().into());
        value["variant_text"] =
            serde_json::Value::String(apply_variant(&record.std_text, kind));
        writeln!(lines, "{value}")?;
    }
    std::fs::write(out.join("variants.jsonl"), lines)?;
    println!("wrote {} variant rows", records.len());
    Ok(())
}

// ── train ───────────────────────────────────────────────────────────────

pub fn train(args: TrainArgs) -> Result<()> {
    let cfg = RunConfig::load(args.common.config.as_deref())?;
    let corpus_path = cfg.required_path("corpus", args.corpus.as_ref())?;
    let image_dir = cfg
        .path("images", args.images.as_ref())
        .unwrap_or_else(|| corpus_path.parent().unwrap_or_else(|| Path::new(".")).to_path_buf());
    let out = out_dir(&cfg, args.common.out.as_ref())?;
    let seed = seed_of(&cfg, args.common.seed)?;
    let train_cfg = resolve_training(&cfg, &args.training, seed)?;

    let records = corpus::read_corpus_jsonl(&corpus_path)?;
    let (_, records) = dataset_records(records, cfg.string("dataset", args.dataset.as_ref()).as_ref())?;
    let train_records = by_split(&records, Split::Train);
    let val_records = by_split(&records, Split::Validation);
    if train_records.is_empty() || val_records.is_empty() {
        bail!("corpus lacks train or validation records for this dataset");
    }

    // The vocabulary is trained on the variant view of the training split.
    let vocab_target = cfg.parse_or("vocab_size", args.model.vocab_size, 1000usize)?;
    let probe_spec = resolve_spec(&cfg, &args.model, vocab_target.max(5))?;
    let vocab = if probe_spec.modality.uses_text() {
        let texts = training::variant_texts(&train_records, probe_spec.variant);
        Some(build_vocab(&texts, vocab_target)?)
    } else {
        None
    };
    let spec = resolve_spec(&cfg, &args.model, vocab.as_ref().map(|v| v.len()).unwrap_or(0).max(5))?;

    let provider = HorizontalEdgeProvider;
    let train_samples =
        prepare_samples(&train_records, &image_dir, &spec, vocab.as_ref(), Some(&provider))?;
    let val_samples =
        prepare_samples(&val_records, &image_dir, &spec, vocab.as_ref(), Some(&provider))?;

    let (model, history) = training::train(spec, &train_samples, &val_samples, &train_cfg)?;

    std::fs::create_dir_all(&out)?;
    let vocab_ref = vocab.as_ref().map(|v| {
        let name = "vocab.txt".to_string();
        (v, name)
    });
    if let Some((v, name)) = &vocab_ref {
        v.save(&out.join(name))?;
    }
    let meta = CheckpointMeta { vocab_ref: vocab_ref.map(|(_, name)| name) };
    save_checkpoint(&out.join("checkpoint.bin"), &model, &meta)?;
    std::fs::write(out.join("history.csv"), training::history_csv(&history))?;
    let best = history.iter().map(|h| h.val_f1).fold(f64::NEG_INFINITY, f64::max);
    println!(
        "trained {} for {} epochs (best validation F1 {})",
        model_tag(&model.spec),
        history.len(),
        if best.is_finite() { format!("{best:.4}") } else { "n/a".into() }
    );
    Ok(())
}

// ── evaluate ────────────────────────────────────────────────────────────

pub fn evaluate(args: EvaluateArgs) -> Result<()> {
    let cfg = RunConfig::load(args.common.config.as_deref())?;
    let checkpoint = cfg.required_path("checkpoint", args.checkpoint.as_ref())?;
    let corpus_path = cfg.required_path("corpus", args.corpus.as_ref())?;
    let image_dir = cfg
        .path("images", args.images.as_ref())
        .unwrap_or_else(|| corpus_path.parent().unwrap_or_else(|| Path::new(".")).to_path_buf());
    let out = out_dir(&cfg, args.common.out.as_ref())?;
    let splits_raw =
        cfg.string("splits", args.splits.as_ref()).unwrap_or_else(|| "continuous,delay".into());
    let mut wanted = Vec::new();
    for part in splits_raw.split(',') {
        match part.trim() {
            "continuous" => wanted.push(Split::Continuous),
            "delay" => wanted.push(Split::Delay),
            other => bail!("unknown split '{other}' (use continuous,delay)"),
        }
    }

    let (model, meta) = load_checkpoint(&checkpoint)?;
    let vocab = load_vocab_for(&model.spec, &checkpoint, &meta)?;
    let records = corpus::read_corpus_jsonl(&corpus_path)?;
    let (_, records) = dataset_records(records, cfg.string("dataset", args.dataset.as_ref()).as_ref())?;

    let provider = HorizontalEdgeProvider;
    let tag = model_tag(&model.spec);
    let mut rows = Vec::new();
    let mut rocs = Vec::new();
    for split in wanted {
        let subset = by_split(&records, split);
        if subset.is_empty() {
            bail!("corpus has no records in the {} split", split.as_str());
        }
        let samples =
            prepare_samples(&subset, &image_dir, &model.spec, vocab.as_ref(), Some(&provider))?;
        let scores = training::predict_scores(&model, &samples)?;
        let labels: Vec<u8> = samples.iter().map(|s| s.label).collect();
        let report = evaluation::evaluate_scores(&scores, &labels)?;
        rocs.push((split, report.roc.clone()));
        rows.push((tag.clone(), split.as_str().to_string(), report));
    }

    std::fs::create_dir_all(&out)?;
    write_metrics_csv(&out.join("metrics.csv"), &rows)?;
    for (split, roc) in rocs {
        write_roc_csv(&out.join(format!("roc_{tag}_{}.csv", split.as_str())), &roc)?;
    }
    for (model, split, r) in &rows {
        println!(
            "{model} {split}: accuracy {:.4} f1 {:.4} auc {:.4} tpr@fpr0 {:.4}",
            r.accuracy, r.f1, r.auc, r.tpr_at_zero_fpr
        );
    }
    Ok(())
}

// ── explain ─────────────────────────────────────────────────────────────

pub fn explain(args: ExplainArgs) -> Result<()> {
    let cfg = RunConfig::load(args.common.config.as_deref())?;
    let checkpoint = cfg.required_path("checkpoint", args.checkpoint.as_ref())?;
    let corpus_path = cfg.required_path("corpus", args.corpus.as_ref())?;
    let image_dir = cfg
        .path("images", args.images.as_ref())
        .unwrap_or_else(|| corpus_path.parent().unwrap_or_else(|| Path::new(".")).to_path_buf());
    let out = out_dir(&cfg, args.common.out.as_ref())?;
    let record_id = cfg.required("record", args.record.as_ref())?;
    let target_class = cfg.parse_or("target_class", args.target_class, 1usize)?;

    let (model, meta) = load_checkpoint(&checkpoint)?;
    let vocab = load_vocab_for(&model.spec, &checkpoint, &meta)?;
    let records = corpus::read_corpus_jsonl(&corpus_path)?;
    let record = records
        .iter()
        .find(|r| r.id == record_id)
        .with_context(|| format!("record '{record_id}' not found in the corpus"))?;

    if model.spec.modality.uses_image() && record.image.is_none() {
        bail!("record '{record_id}' lacks the image modality this checkpoint needs");
    }
    if model.spec.modality.uses_text() && record.std_text.trim().is_empty() {
        bail!("record '{record_id}' lacks the text modality this checkpoint needs");
    }

    let provider = HorizontalEdgeProvider;
    let sample = prepare_sample(record, &image_dir, &model.spec, vocab.as_ref(), Some(&provider))?;

    std::fs::create_dir_all(&out)?;
    if model.spec.modality.uses_image() {
        let map = explain::grad_cam(&model, &sample.input, target_class)?;
        let mut csv = String::new();
        for row in map.heatmap.chunks(map.size) {
            let cells: Vec<String> = row.iter().map(|v| format!("{v:.6}")).collect();
            writeln!(csv, "{}", cells.join(","))?;
        }
        std::fs::write(out.join(format!("heatmap_{record_id}.csv")), csv)?;
        raster::write_pgm(
            &out.join(format!("heatmap_{record_id}.pgm")),
            map.size,
            map.size,
            &map.heatmap,
        )?;
    }
    if model.spec.modality.uses_text() {
        let tokens = sample.input.tokens.as_ref().expect("text sample");
        let importance = explain::attention_importance(&model, tokens)?;
        let mut csv = String::from("word,score\n");
        for (word, score) in importance.words.iter().zip(&importance.scores) {
            writeln!(csv, "{},{score:.6}", csv_field(word))?;
        }
        std::fs::write(out.join(format!("words_{record_id}.csv")), csv)?;
    }
    println!("explained record {record_id}");
    Ok(())
}

// ── xorg ────────────────────────────────────────────────────────────────

pub fn xorg(args: XorgArgs) -> Result<()> {
    let cfg = RunConfig::load(args.common.config.as_deref())?;
    let corpus_path = cfg.required_path("corpus", args.corpus.as_ref())?;
    let image_dir = cfg
        .path("images", args.images.as_ref())
        .unwrap_or_else(|| corpus_path.parent().unwrap_or_else(|| Path::new(".")).to_path_buf());
    let out = out_dir(&cfg, args.common.out.as_ref())?;
    let seed = seed_of(&cfg, args.common.seed)?;
    let train_cfg = resolve_training(&cfg, &args.training, seed)?;

    let records = corpus::read_corpus_jsonl(&corpus_path)?;
    let datasets: BTreeSet<Org> = records.iter().map(|r| r.dataset).collect();
    if datasets.len() != 3 {
        bail!("cross-organization experiment needs exactly 3 datasets, found {}", datasets.len());
    }

    // One shared vocabulary over all training text keeps encodings comparable.
    let vocab_target = cfg.parse_or("vocab_size", args.model.vocab_size, 1000usize)?;
    let probe_spec = resolve_spec(&cfg, &args.model, vocab_target.max(5))?;
    let all_train: Vec<CorpusRecord> = records
        .iter()
        .filter(|r| r.split == Split::Train)
        .cloned()
        .collect();
    let vocab = if probe_spec.modality.uses_text() {
        Some(build_vocab(&training::variant_texts(&all_train, probe_spec.variant), vocab_target)?)
    } else {
        None
    };
    let spec = resolve_spec(&cfg, &args.model, vocab.as_ref().map(|v| v.len()).unwrap_or(0).max(5))?;

    let provider = HorizontalEdgeProvider;
    let mut org_sets: Vec<OrgDataset> = Vec::with_capacity(3);
    for org in &datasets {
        let subset: Vec<CorpusRecord> =
            records.iter().filter(|r| r.dataset == *org).cloned().collect();
        let mut splits: [Vec<TrainSample>; 4] = Default::default();
        for (i, split) in
            [Split::Train, Split::Validation, Split::Continuous, Split::Delay].iter().enumerate()
        {
            let recs = by_split(&subset, *split);
            splits[i] = prepare_samples(&recs, &image_dir, &spec, vocab.as_ref(), Some(&provider))?;
        }
        let [train, validation, continuous, delay] = splits;
        org_sets.push(OrgDataset { org: *org, train, validation, continuous, delay });
    }
    let org_sets: [OrgDataset; 3] = org_sets
        .try_into()
        .map_err(|_| anyhow::anyhow!("expected exactly three organizations"))?;

    let rows = evaluation::cross_org_experiment(&org_sets, &spec, &train_cfg)?;

    std::fs::create_dir_all(&out)?;
    let mut csv =
        String::from("target,baseline_continuous,multi_continuous,baseline_delay,multi_delay\n");
    for row in &rows {
        writeln!(
            csv,
            "{},{:.6},{:.6},{:.6},{:.6}",
            row.target.as_str(),
            row.baseline_continuous,
            row.multi_continuous,
            row.baseline_delay,
            row.multi_delay
        )?;
        println!(
            "{}: baseline C {:.4} multi C {:.4} | baseline D {:.4} multi D {:.4}",
            row.target.as_str(),
            row.baseline_continuous,
            row.multi_continuous,
            row.baseline_delay,
            row.multi_delay
        );
    }
    std::fs::write(out.join("xorg.csv"), csv)?;
    Ok(())
}

// ── make-synthetic ──────────────────────────────────────────────────────

pub fn make_synthetic(args: SynthArgs) -> Result<()> {
    let cfg = RunConfig::load(args.common.config.as_deref())?;
    let out = out_dir(&cfg, args.common.out.as_ref())?;
    let kind = args.kind.clone().unwrap_or_else(|| "multimodal".into());
    let opts = SyntheticOptions {
        records: args.records.unwrap_or(2000),
        image_size: cfg.parse_or("image_size", args.image_size, 16usize)?,
        seed: seed_of(&cfg, args.common.seed)?,
    };
    std::fs::create_dir_all(&out)?;
    let count = match kind.as_str() {
        "multimodal" => synthetic::generate_multimodal(&out, &opts)?.len(),
        "quadrant" => synthetic::generate_quadrant(&out, &opts)?.len(),
        "xorg" => synthetic::generate_xorg(&out, &opts)?.len(),
        "raw" => synthetic::generate_raw_input(&out, &opts)?,
        other => bail!("unknown fixture kind '{other}' (multimodal, quadrant, xorg, raw)"),
    };
    println!("generated {count} {kind} records in {}", out.display());
    Ok(())
}
