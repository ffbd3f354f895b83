//! Grad-CAM heatmaps for the visual sub-network and attention-based word
//! importance for the textual sub-network.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::model::{Model, SampleInput};
use crate::numerics::{Tape, Tensor};
use crate::raster::bilinear_resize;
use crate::tokenizer::TokenSequence;
use crate::{Error, Result};

/// Class-discriminative heatmap over the model's input plane.
#[derive(Debug, Clone)]
pub struct GradCamMap {
    /// Layer-resolution map, before upsampling; non-negative.
    pub raw: Vec<f64>,
    pub raw_height: usize,
    pub raw_width: usize,
    /// Bilinearly upsampled to size×size and max-normalized to [0, 1].
    pub heatmap: Vec<f64>,
    pub size: usize,
    /// Name of the extractor whose final conv layer was used.
    pub layer: String,
    pub target_class: usize,
}

/// Gradient-weighted class activation map at the extractor's designated
/// final conv layer: channel weights are spatial means of ∂logit/∂A^k, the
/// map is ReLU of the weighted activation sum.
pub fn grad_cam(model: &Model, input: &SampleInput, target_class: usize) -> Result<GradCamMap> {
    if !model.spec.modality.uses_image() {
        return Err(Error::Explanation("grad-cam needs a model with a visual sub-network".into()));
    }
    if target_class > 1 {
        return Err(Error::Input(format!("target class {target_class} out of range")));
    }
    let kind = model.spec.visual.expect("validated spec");

    let mut tape = Tape::new();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let trace = model.forward(&mut tape, input, false, 0.0, &mut rng)?;
    let (cam_node, [k, h, w]) = trace.cam.ok_or_else(|| {
        Error::Explanation(format!(
            "grad-cam is undefined for the '{}' extractor: no conv maps feed its pooling path",
            kind.as_str()
        ))
    })?;

    // Backpropagate from the pre-softmax class logit.
    let target = tape.pick(trace.logits, target_class)?;
    tape.backward(target)?;
    let grads = tape.grad(cam_node)?.to_vec();
    let maps = tape.data(cam_node);

    let hw = h * w;
    let mut raw = vec![0.0; hw];
    for ch in 0..k {
        let alpha = grads[ch * hw..(ch + 1) * hw].iter().sum::<f64>() / hw as f64;
        for (acc, &a) in raw.iter_mut().zip(&maps[ch * hw..(ch + 1) * hw]) {
            *acc += alpha * a;
        }
    }
    for v in &mut raw {
        *v = v.max(0.0);
    }

    let size = model.spec.image_size;
    let mut heatmap = bilinear_resize(&raw, w, h, size, size);
    let max = heatmap.iter().cloned().fold(0.0f64, f64::max);
    if max > 0.0 {
        for v in &mut heatmap {
            *v /= max;
        }
    }
    Ok(GradCamMap {
        raw,
        raw_height: h,
        raw_width: w,
        heatmap,
        size,
        layer: kind.as_str().to_string(),
        target_class,
    })
}

/// Per-word attention importance, softmax-normalized.
#[derive(Debug, Clone)]
pub struct WordImportance {
    /// `[CLS]`, the source words, then `[SEP]`.
    pub words: Vec<String>,
    pub scores: Vec<f64>,
}

/// Head-averaged last-layer attention with the `[SEP]` row zeroed: the
/// matrix whose column sums define raw importance.
pub fn head_average_and_zero_sep(attention: &Tensor, sep_position: usize) -> Vec<f64> {
    let shape = attention.shape();
    let (heads, n) = (shape[0], shape[1]);
    let mut avg = vec![0.0; n * n];
    for head in 0..heads {
        for i in 0..n {
            for j in 0..n {
                avg[i * n + j] += attention.data()[(head * n + i) * n + j];
            }
        }
    }
    for v in &mut avg {
        *v /= heads as f64;
    }
    for j in 0..n {
        avg[sep_position * n + j] = 0.0;
    }
    avg
}

/// Fold a head-averaged attention matrix into word-level importance:
/// column sums, padding mass folded into `[SEP]`, subwords summed into
/// their source words, softmax over the word list.
pub fn word_importance_from_attention(
    matrix: &[f64],
    tokens: &TokenSequence,
) -> WordImportance {
    let n = tokens.len();
    debug_assert_eq!(matrix.len(), n * n);
    let sep = tokens.sep_position();

    let mut position_importance = vec![0.0; n];
    for (j, imp) in position_importance.iter_mut().enumerate() {
        for i in 0..n {
            *imp += matrix[i * n + j];
        }
    }
    // [SEP] absorbs the attention pointing at padding.
    let pad_mass: f64 = position_importance[sep + 1..].iter().sum();
    position_importance[sep] += pad_mass;

    let word_count = tokens.words.len();
    let mut words = Vec::with_capacity(word_count + 2);
    let mut scores = Vec::with_capacity(word_count + 2);
    words.push("[CLS]".to_string());
    scores.push(position_importance[0]);
    for (w, word) in tokens.words.iter().enumerate() {
        let total: f64 = (0..n)
            .filter(|&p| tokens.word_index[p] == Some(w))
            .map(|p| position_importance[p])
            .sum();
        words.push(word.clone());
        scores.push(total);
    }
    words.push("[SEP]".to_string());
    scores.push(position_importance[sep]);

    // Softmax over the word list.
    let max = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for s in &mut scores {
        *s = (*s - max).exp();
        total += *s;
    }
    for s in &mut scores {
        *s /= total;
    }
    WordImportance { words, scores }
}

/// Word importance from the model's last-layer attention over `tokens`.
pub fn attention_importance(model: &Model, tokens: &TokenSequence) -> Result<WordImportance> {
    let attention = model.text_attention(tokens).map_err(|_| {
        Error::Explanation("attention importance needs a model with a text encoder".into())
    })?;
    let last = attention.last().expect("text encoders have at least one layer");
    let matrix = head_average_and_zero_sep(last, tokens.sep_position());
    Ok(word_importance_from_attention(&matrix, tokens))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{
        Modality, ModelSpec, TextEncoderConfig, VisualExtractorKind,
    };
    use crate::textvariants::VariantKind;
    use crate::tokenizer;
    use rand::Rng;

    fn image_model(kind: VisualExtractorKind, size: usize, seed: u64) -> Model {
        Model::init(
            ModelSpec {
                modality: Modality::ImageOnly,
                visual: Some(kind),
                text: None,
                image_size: size,
                variant: VariantKind::Original,
            },
            seed,
        )
        .unwrap()
    }

    fn random_input(size: usize, seed: u64) -> SampleInput {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let data = (0..3 * size * size).map(|_| rng.gen::<f64>()).collect();
        SampleInput {
            image: Some(Tensor::new(vec![3, size, size], data).unwrap()),
            structure_map: None,
            tokens: None,
        }
    }

    #[test]
    fn zero_classifier_gives_zero_heatmap() {
        let mut model = image_model(VisualExtractorKind::ResidualCnn, 8, 3);
        model.params.get_mut("clf.w").unwrap().data_mut().fill(0.0);
        model.params.get_mut("clf.b").unwrap().data_mut().fill(0.0);
        let map = grad_cam(&model, &random_input(8, 1), 1).unwrap();
        assert!(map.heatmap.iter().all(|&v| v == 0.0));
        assert_eq!(map.heatmap.len(), 64);
    }

    #[test]
    fn heatmap_is_nonnegative_bounded_and_deterministic() {
        let model = image_model(VisualExtractorKind::ResidualCnn, 8, 4);
        let input = random_input(8, 2);
        let a = grad_cam(&model, &input, 1).unwrap();
        let b = grad_cam(&model, &input, 1).unwrap();
        assert_eq!(a.heatmap, b.heatmap);
        assert!(a.heatmap.iter().all(|&v| (0.0..=1.0).contains(&v)));
    }

    #[test]
    fn style_extractor_has_no_grad_cam() {
        let model = image_model(VisualExtractorKind::Style, 8, 5);
        let err = grad_cam(&model, &random_input(8, 3), 1).unwrap_err();
        match err {
            Error::Explanation(msg) => assert!(msg.contains("style"), "got: {msg}"),
            other => panic!("expected explanation error, got {other:?}"),
        }
    }

    #[test]
    fn linear_probe_ranks_like_channel_zero() {
        // Class-1 score = GAP feature 0 = mean of cam channel 0, so the raw
        // heatmap must rank pixels exactly like channel-0 activations.
        let mut model = image_model(VisualExtractorKind::ResidualCnn, 8, 6);
        model.params.get_mut("clf.w").unwrap().data_mut().fill(0.0);
        model.params.get_mut("clf.b").unwrap().data_mut().fill(0.0);
        model.params.get_mut("clf.w").unwrap().data_mut()[64] = 1.0; // row 1, col 0
        let input = random_input(8, 4);

        let map = grad_cam(&model, &input, 1).unwrap();

        let mut tape = Tape::new();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let trace = model.forward(&mut tape, &input, false, 0.0, &mut rng).unwrap();
        let (cam_node, [_, h, w]) = trace.cam.unwrap();
        let channel0 = tape.data(cam_node)[..h * w].to_vec();

        let rank = |values: &[f64]| {
            let mut idx: Vec<usize> = (0..values.len()).collect();
            idx.sort_by(|&a, &b| values[a].partial_cmp(&values[b]).unwrap());
            idx
        };
        assert_eq!(rank(&map.raw), rank(&channel0));
    }

    fn text_model(seed: u64) -> (Model, TokenSequence) {
        let vocab = tokenizer::build_vocab(&["alpha beta gamma delta words"], 48).unwrap();
        let cfg = TextEncoderConfig {
            layers: 2,
            heads: 2,
            d_model: 8,
            n: 8,
            vocab_size: vocab.len(),
        };
        let model = Model::init(
            ModelSpec {
                modality: Modality::TextOnly,
                visual: None,
                text: Some(cfg),
                image_size: 8,
                variant: VariantKind::Original,
            },
            seed,
        )
        .unwrap();
        let tokens = tokenizer::encode("alpha beta", &vocab, 8).unwrap();
        (model, tokens)
    }

    #[test]
    fn importance_scores_sum_to_one() {
        let (model, tokens) = text_model(11);
        let imp = attention_importance(&model, &tokens).unwrap();
        assert_eq!(imp.words.len(), 2 + 2);
        assert_eq!(imp.words[0], "[CLS]");
        assert_eq!(imp.words.last().unwrap(), "[SEP]");
        let total: f64 = imp.scores.iter().sum();
        assert!((total - 1.0).abs() < 1e-9);
    }

    #[test]
    fn sep_row_is_zeroed_in_aggregation_input() {
        let (model, tokens) = text_model(12);
        let attention = model.text_attention(&tokens).unwrap();
        let sep = tokens.sep_position();
        let matrix = head_average_and_zero_sep(attention.last().unwrap(), sep);
        let n = tokens.len();
        assert!(matrix[sep * n..(sep + 1) * n].iter().all(|&v| v == 0.0));
        // Other real rows keep their mass.
        let row0: f64 = matrix[..n].iter().sum();
        assert!(row0 > 0.0);
    }

    #[test]
    fn hand_computed_uniform_attention() {
        // n = 4: [CLS, word, SEP, PAD] with uniform attention 0.25 in every
        // cell. After zeroing the SEP row, each column sums to 0.75; PAD
        // mass folds into SEP making it 1.5; softmax over [0.75, 0.75, 1.5].
        let vocab = tokenizer::build_vocab(&["w"], 8).unwrap();
        let tokens = tokenizer::encode("w", &vocab, 4).unwrap();
        let n = 4;
        let mut matrix = vec![0.25; n * n];
        let sep = tokens.sep_position();
        assert_eq!(sep, 2);
        for j in 0..n {
            matrix[sep * n + j] = 0.0;
        }
        let imp = word_importance_from_attention(&matrix, &tokens);
        let e = |x: f64| x.exp();
        let z = e(0.75) + e(0.75) + e(1.5);
        assert!((imp.scores[0] - e(0.75) / z).abs() < 1e-12);
        assert!((imp.scores[1] - e(0.75) / z).abs() < 1e-12);
        assert!((imp.scores[2] - e(1.5) / z).abs() < 1e-12);
    }

    #[test]
    fn identical_embeddings_swap_scores() {
        let (mut model, _) = text_model(13);
        let vocab = tokenizer::build_vocab(&["alpha beta gamma delta words"], 48).unwrap();
        let ida = vocab.id_of("alpha").unwrap();
        let idb = vocab.id_of("beta").unwrap();
        // Force identical token embeddings for the two words.
        let d = model.spec.text.as_ref().unwrap().d_model;
        let table = model.params.get_mut("text.tok_emb").unwrap();
        let row: Vec<f64> = table.data()[ida * d..(ida + 1) * d].to_vec();
        table.data_mut()[idb * d..(idb + 1) * d].copy_from_slice(&row);

        let t1 = tokenizer::encode("alpha beta", &vocab, 8).unwrap();
        let t2 = tokenizer::encode("beta alpha", &vocab, 8).unwrap();
        let i1 = attention_importance(&model, &t1).unwrap();
        let i2 = attention_importance(&model, &t2).unwrap();
        // Same scores by position; word labels swap.
        assert_eq!(i1.scores, i2.scores);
        assert_eq!(i1.words[1], i2.words[2]);
        assert_eq!(i1.words[2], i2.words[1]);
    }
}
