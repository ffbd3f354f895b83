//! Batched SGD with validation-F1 early stopping.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::corpus::{CorpusRecord, Label};
use crate::model::{
    structure_map_tensor, BoundParams, Model, ModelSpec, SampleInput, TextMapProvider,
};
use crate::numerics::Tape;
use crate::raster;
use crate::textvariants::{apply_variant, VariantKind};
use crate::tokenizer::{self, Vocab};
use crate::{Error, Result};

/// Hyperparameters of one training run.
#[derive(Debug, Clone)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    /// Epochs without validation-F1 improvement before stopping.
    pub patience: usize,
    pub seed: u64,
    pub dropout: f64,
    /// When false, training always runs the full epoch budget.
    pub early_stop: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 0.05,
            batch_size: 32,
            max_epochs: 50,
            patience: 5,
            seed: 0,
            dropout: 0.1,
            early_stop: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.learning_rate <= 0.0 {
            return Err(Error::Config("learning rate must be positive".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch size must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config(format!("dropout {} outside [0, 1)", self.dropout)));
        }
        if self.early_stop && self.patience == 0 {
            return Err(Error::Config("early stopping needs patience >= 1".into()));
        }
        // A zero epoch budget is a valid degenerate run (initial parameters).
        if self.early_stop && self.max_epochs > 0 && self.patience > self.max_epochs {
            return Err(Error::Config(format!(
                "patience {} exceeds the epoch budget {}",
                self.patience, self.max_epochs
            )));
        }
        Ok(())
    }
}

/// One model-ready labeled sample.
#[derive(Debug, Clone)]
pub struct TrainSample {
    pub id: String,
    pub input: SampleInput,
    /// 1 = sponsored.
    pub label: u8,
}

/// Per-epoch training history row.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochStats {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_f1: f64,
}

/// Turn built-corpus records into model inputs: variant text encoded against
/// the vocabulary, image loaded and resized, structure map derived when the
/// extractor wants one. Records lacking a required modality are rejected.
pub fn prepare_samples(
    records: &[CorpusRecord],
    image_dir: &Path,
    spec: &ModelSpec,
    vocab: Option<&Vocab>,
    provider: Option<&dyn TextMapProvider>,
) -> Result<Vec<TrainSample>> {
    let mut samples = Vec::with_capacity(records.len());
    for record in records {
        samples.push(prepare_sample(record, image_dir, spec, vocab, provider)?);
    }
    Ok(samples)
}

pub fn prepare_sample(
    record: &CorpusRecord,
    image_dir: &Path,
    spec: &ModelSpec,
    vocab: Option<&Vocab>,
    provider: Option<&dyn TextMapProvider>,
) -> Result<TrainSample> {
    let mut input = SampleInput::default();
    if spec.modality.uses_image() {
        let rel = record.image.as_ref().ok_or_else(|| {
            Error::Input(format!("record {} has no image for an image model", record.id))
        })?;
        let raster = raster::load_image(&image_dir.join(rel))?;
        let image = raster.to_model_tensor(spec.image_size)?;
        if spec.visual.is_some_and(|k| k.needs_structure_map()) {
            let provider = provider.ok_or_else(|| {
                Error::Config(
                    "image-structure extractor needs a text-probability-map provider".into(),
                )
            })?;
            input.structure_map = Some(structure_map_tensor(&image, provider)?);
        }
        input.image = Some(image);
    }
    if spec.modality.uses_text() {
        let cfg = spec
            .text
            .as_ref()
            .ok_or_else(|| Error::Config("text modality without a text encoder".into()))?;
        let vocab = vocab
            .ok_or_else(|| Error::Config("text modality needs a vocabulary".into()))?;
        let view = apply_variant(&record.std_text, spec.variant);
        input.tokens = Some(tokenizer::encode(&view, vocab, cfg.n)?);
    }
    Ok(TrainSample {
        id: record.id.clone(),
        input,
        label: if record.label == Label::Sponsored { 1 } else { 0 },
    })
}

/// Variant-transformed texts of the records, for vocabulary building.
pub fn variant_texts(records: &[CorpusRecord], variant: VariantKind) -> Vec<String> {
    records.iter().map(|r| apply_variant(&r.std_text, variant)).collect()
}

/// Sponsored-class probabilities, inference mode, binding parameters once
/// per chunk to bound tape growth.
pub fn predict_scores(model: &Model, samples: &[TrainSample]) -> Result<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut scores = Vec::with_capacity(samples.len());
    for chunk in samples.chunks(64) {
        let mut tape = Tape::new();
        let bound = model.bind(&mut tape);
        for sample in chunk {
            let trace =
                model.forward_on(&mut tape, &bound, &sample.input, false, 0.0, &mut rng)?;
            scores.push(tape.data(trace.probs)[1]);
        }
    }
    Ok(scores)
}

/// Validation F1 at the 0.5 threshold.
fn validation_f1(model: &Model, samples: &[TrainSample]) -> Result<f64> {
    let scores = predict_scores(model, samples)?;
    let labels: Vec<u8> = samples.iter().map(|s| s.label).collect();
    crate::evaluation::f1_score(&scores, &labels)
}

fn apply_sgd_step(
    model: &mut Model,
    tape: &Tape,
    bound: &BoundParams,
    learning_rate: f64,
) -> Result<()> {
    for (name, &node) in bound.iter() {
        let grad = tape.grad(node)?;
        let tensor = model.params.get_mut(name)?;
        for (value, g) in tensor.data_mut().iter_mut().zip(grad) {
            *value -= learning_rate * g;
        }
    }
    Ok(())
}

/// Shuffled mini-batch SGD. Keeps the checkpoint with the best validation F1
/// (ties keep the earlier epoch) and stops once `patience` epochs pass
/// without improvement. `max_epochs = 0` returns the initial parameters.
pub fn train(
    spec: ModelSpec,
    train_split: &[TrainSample],
    val_split: &[TrainSample],
    cfg: &TrainConfig,
) -> Result<(Model, Vec<EpochStats>)> {
    cfg.validate()?;
    spec.validate()?;
    if train_split.is_empty() {
        return Err(Error::Input("training split is empty".into()));
    }
    if val_split.is_empty() {
        return Err(Error::Input("validation split is empty".into()));
    }

    let mut model = Model::init(spec, cfg.seed)?;
    let mut best = model.clone();
    let mut best_f1 = f64::NEG_INFINITY;
    let mut stale_epochs = 0usize;
    let mut history = Vec::new();

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(1);

    let mut indices: Vec<usize> = (0..train_split.len()).collect();
    for epoch in 0..cfg.max_epochs {
        // Fisher-Yates shuffle.
        for i in (1..indices.len()).rev() {
            let j = rng.gen_range(0..=i);
            indices.swap(i, j);
        }

        let mut loss_sum = 0.0;
        for batch in indices.chunks(cfg.batch_size) {
            let mut tape = Tape::new();
            let bound = model.bind(&mut tape);
            let mut losses = Vec::with_capacity(batch.len());
            for &idx in batch {
                let sample = &train_split[idx];
                let trace = model.forward_on(
                    &mut tape,
                    &bound,
                    &sample.input,
                    true,
                    cfg.dropout,
                    &mut rng,
                )?;
                losses.push(tape.cross_entropy_logits(trace.logits, sample.label as usize)?);
            }
            let batch_loss = tape.mean_of(&losses)?;
            let loss_value = tape.data(batch_loss)[0];
            if !loss_value.is_finite() {
                return Err(Error::Training(format!(
                    "loss diverged to {loss_value} in epoch {epoch}"
                )));
            }
            loss_sum += loss_value * batch.len() as f64;
            tape.backward(batch_loss)?;
            apply_sgd_step(&mut model, &tape, &bound, cfg.learning_rate)?;
        }

        let train_loss = loss_sum / train_split.len() as f64;
        let val_f1 = validation_f1(&model, val_split)?;
        history.push(EpochStats { epoch, train_loss, val_f1 });

        if val_f1 > best_f1 {
            best_f1 = val_f1;
            best = model.clone();
            stale_epochs = 0;
        } else {
            stale_epochs += 1;
        }
        if cfg.early_stop && stale_epochs >= cfg.patience {
            break;
        }
    }

    if history.is_empty() {
        best = model;
    }
    Ok((best, history))
}

/// History rows as CSV (epoch, train_loss, val_f1).
pub fn history_csv(history: &[EpochStats]) -> String {
    let mut out = String::from("epoch,train_loss,val_f1\n");
    for row in history {
        out.push_str(&format!("{},{:.6},{:.6}\n", row.epoch, row.train_loss, row.val_f1));
    }
    out
}
