use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::gradcheck::{central_diff_at, close, DEFAULT_STEP};
use crate::numerics::{Tape, Tensor};
use crate::tokenizer::{self, Vocab};
use crate::Error;

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn image_only_spec(kind: VisualExtractorKind, size: usize) -> ModelSpec {
    ModelSpec {
        modality: Modality::ImageOnly,
        visual: Some(kind),
        text: None,
        image_size: size,
        variant: VariantKind::Original,
    }
}

fn micro_text_cfg(vocab_size: usize) -> TextEncoderConfig {
    TextEncoderConfig { layers: 1, heads: 2, d_model: 8, n: 6, vocab_size }
}

fn tiny_vocab() -> Vocab {
    tokenizer::build_vocab(&["hello world tiny vocab words here"], 40).unwrap()
}

fn random_image(rng: &mut ChaCha8Rng, size: usize) -> Tensor {
    let data = (0..3 * size * size).map(|_| rng.gen::<f64>()).collect();
    Tensor::new(vec![3, size, size], data).unwrap()
}

fn sample_with_image(rng: &mut ChaCha8Rng, size: usize) -> SampleInput {
    let image = random_image(rng, size);
    let structure_map = structure_map_tensor(&image, &HorizontalEdgeProvider).unwrap();
    SampleInput { image: Some(image), structure_map: Some(structure_map), tokens: None }
}

#[test]
fn spec_invariants_are_enforced() {
    let mut spec = image_only_spec(VisualExtractorKind::ResidualCnn, 16);
    spec.text = Some(TextEncoderConfig::default());
    assert!(matches!(spec.validate(), Err(Error::Config(_))));

    let spec = ModelSpec {
        modality: Modality::TextOnly,
        visual: None,
        text: Some(TextEncoderConfig { heads: 3, ..Default::default() }),
        image_size: 64,
        variant: VariantKind::Original,
    };
    assert!(matches!(spec.validate(), Err(Error::Config(_))), "d_model % heads != 0");

    let spec = image_only_spec(VisualExtractorKind::PlainCnn, 8);
    assert!(matches!(spec.validate(), Err(Error::Config(_))), "plain needs S >= 16");
}

#[test]
fn zero_image_zero_bias_gives_zero_features() {
    let spec = image_only_spec(VisualExtractorKind::ResidualCnn, 8);
    let model = Model::init(spec, 1).unwrap();
    // Biases initialize to zero, so a zero image propagates zeros.
    let input = SampleInput {
        image: Some(Tensor::zeros(vec![3, 8, 8])),
        structure_map: None,
        tokens: None,
    };
    let mut tape = Tape::new();
    let trace = model.forward(&mut tape, &input, false, 0.0, &mut rng(0)).unwrap();
    let rv = trace.rv.unwrap();
    assert!(tape.data(rv).iter().all(|&v| v == 0.0));
    assert_eq!(tape.data(rv).len(), 64);
}

#[test]
fn feature_lengths_match_forward_outputs() {
    let mut r = rng(2);
    for kind in VisualExtractorKind::ALL {
        let size = kind.min_image_size().max(8);
        let spec = image_only_spec(kind, size);
        let model = Model::init(spec, 3).unwrap();
        let input = sample_with_image(&mut r, size);
        let mut tape = Tape::new();
        let trace = model.forward(&mut tape, &input, false, 0.0, &mut rng(0)).unwrap();
        assert_eq!(
            tape.data(trace.rv.unwrap()).len(),
            kind.feature_len(),
            "feature length of {}",
            kind.as_str()
        );
    }
    assert_eq!(
        VisualExtractorKind::StyleContent.feature_len(),
        VisualExtractorKind::Style.feature_len() + VisualExtractorKind::Content.feature_len()
    );
}

#[test]
fn structure_extractor_requires_map() {
    let spec = image_only_spec(VisualExtractorKind::ImageStructure, 8);
    let model = Model::init(spec, 3).unwrap();
    let input = SampleInput {
        image: Some(random_image(&mut rng(4), 8)),
        structure_map: None,
        tokens: None,
    };
    let mut tape = Tape::new();
    let err = model.forward(&mut tape, &input, false, 0.0, &mut rng(0)).unwrap_err();
    assert!(matches!(err, Error::Config(_)));
}

/// Finite-difference check over a sample of parameter coordinates.
fn check_param_gradients(model: &Model, input: &SampleInput, n_probes: usize, seed: u64) {
    let mut tape = Tape::new();
    let bound = model.bind(&mut tape);
    let trace = model
        .forward_on(&mut tape, &bound, input, false, 0.0, &mut rng(0))
        .unwrap();
    let loss = tape.cross_entropy_logits(trace.logits, 1).unwrap();
    tape.backward(loss).unwrap();

    let names: Vec<String> = model.params.iter().map(|(n, _)| n.clone()).collect();
    let mut r = rng(seed);
    let mut checked = 0;
    while checked < n_probes {
        let name = &names[r.gen_range(0..names.len())];
        let tensor = model.params.get(name).unwrap();
        let idx = r.gen_range(0..tensor.numel());
        let analytic = tape.grad(bound.node(name).unwrap()).unwrap()[idx];

        let eval = |data: &[f64]| {
            let mut probe = model.clone();
            probe.params.get_mut(name).unwrap().data_mut().copy_from_slice(data);
            let mut t = Tape::new();
            let tr = probe.forward(&mut t, input, false, 0.0, &mut rng(0)).unwrap();
            let l = t.cross_entropy_logits(tr.logits, 1).unwrap();
            t.data(l)[0]
        };
        let numeric = central_diff_at(eval, tensor.data(), idx, DEFAULT_STEP);
        assert!(
            close(analytic, numeric, 1e-5, 1e-7),
            "grad mismatch at {name}[{idx}]: analytic {analytic}, numeric {numeric}"
        );
        checked += 1;
    }
}

#[test]
fn visual_gradients_match_finite_differences() {
    let mut r = rng(11);
    for kind in [
        VisualExtractorKind::ResidualCnn,
        VisualExtractorKind::BranchCnn,
        VisualExtractorKind::Style,
        VisualExtractorKind::Content,
        VisualExtractorKind::ImageStructure,
    ] {
        let size = kind.min_image_size().max(8);
        let model = Model::init(image_only_spec(kind, size), 13).unwrap();
        let input = sample_with_image(&mut r, size);
        check_param_gradients(&model, &input, 12, 100 + kind.feature_len() as u64);
    }
}

#[test]
fn plain_cnn_gradients_match_finite_differences() {
    let mut r = rng(12);
    let model = Model::init(image_only_spec(VisualExtractorKind::PlainCnn, 16), 13).unwrap();
    let input = sample_with_image(&mut r, 16);
    check_param_gradients(&model, &input, 10, 77);
}

fn text_only_model(seed: u64) -> (Model, SampleInput) {
    let vocab = tiny_vocab();
    let spec = ModelSpec {
        modality: Modality::TextOnly,
        visual: None,
        text: Some(micro_text_cfg(vocab.len())),
        image_size: 8,
        variant: VariantKind::Original,
    };
    let model = Model::init(spec, seed).unwrap();
    let tokens = tokenizer::encode("hello tiny world", &vocab, 6).unwrap();
    let input = SampleInput { image: None, structure_map: None, tokens: Some(tokens) };
    (model, input)
}

#[test]
fn text_attention_rows_sum_to_one() {
    let (model, input) = text_only_model(21);
    let mut tape = Tape::new();
    let trace = model.forward(&mut tape, &input, false, 0.0, &mut rng(0)).unwrap();
    assert_eq!(trace.attention.len(), 1);
    let att = &trace.attention[0];
    let n = att.shape()[1];
    for h in 0..att.shape()[0] {
        for row in 0..n {
            let base = (h * n + row) * n;
            let total: f64 = att.data()[base..base + n].iter().sum();
            assert!((total - 1.0).abs() < 1e-9);
        }
    }
}

#[test]
fn pad_embeddings_do_not_reach_cls() {
    let (mut model, input) = text_only_model(22);
    let rt_of = |m: &Model| {
        let mut tape = Tape::new();
        let tr = m.forward(&mut tape, &input, false, 0.0, &mut rng(0)).unwrap();
        tape.data(tr.rt.unwrap()).to_vec()
    };
    let before = rt_of(&model);
    // Perturb the [PAD] token embedding row.
    let d = model.spec.text.as_ref().unwrap().d_model;
    {
        let table = model.params.get_mut("text.tok_emb").unwrap();
        for v in &mut table.data_mut()[tokenizer::PAD_ID * d..(tokenizer::PAD_ID + 1) * d] {
            *v += 3.5;
        }
    }
    let after = rt_of(&model);
    assert_eq!(before, after, "masking must isolate [PAD] embeddings from R_T");
}

#[test]
fn text_gradients_match_finite_differences() {
    let (model, input) = text_only_model(23);
    check_param_gradients(&model, &input, 20, 55);
}

#[test]
fn classifier_symmetric_when_zeroed() {
    let (mut model, input) = text_only_model(24);
    model.params.get_mut("clf.w").unwrap().data_mut().fill(0.0);
    model.params.get_mut("clf.b").unwrap().data_mut().fill(0.0);
    let mut tape = Tape::new();
    let trace = model.forward(&mut tape, &input, false, 0.0, &mut rng(0)).unwrap();
    assert_eq!(tape.data(trace.probs), &[0.5, 0.5]);
    let loss = tape.cross_entropy_logits(trace.logits, 1).unwrap();
    assert!((tape.data(loss)[0] - 2.0f64.ln()).abs() < 1e-12);
}

#[test]
fn classifier_bias_hand_softmax() {
    let (mut model, input) = text_only_model(25);
    model.params.get_mut("clf.w").unwrap().data_mut().fill(0.0);
    let b = model.params.get_mut("clf.b").unwrap();
    b.data_mut()[0] = 0.0;
    b.data_mut()[1] = 3.0f64.ln();
    let mut tape = Tape::new();
    let trace = model.forward(&mut tape, &input, false, 0.0, &mut rng(0)).unwrap();
    let p = tape.data(trace.probs);
    assert!((p[0] - 0.25).abs() < 1e-12);
    assert!((p[1] - 0.75).abs() < 1e-12);
}

#[test]
fn probabilities_sum_to_one() {
    let mut r = rng(26);
    let (model, input) = text_only_model(26);
    for _ in 0..20 {
        let mut tape = Tape::new();
        let trace = model.forward(&mut tape, &input, true, 0.3, &mut r).unwrap();
        let p = tape.data(trace.probs);
        assert!((p[0] + p[1] - 1.0).abs() < 1e-9);
    }
}

#[test]
fn concat_permutation_leaves_probabilities_unchanged() {
    // p(softmax(W·[a;b])) equals p with swapped halves and matching column swap.
    let mut r = rng(27);
    let a: Vec<f64> = (0..3).map(|_| r.gen::<f64>()).collect();
    let b: Vec<f64> = (0..2).map(|_| r.gen::<f64>()).collect();
    let w: Vec<f64> = (0..10).map(|_| r.gen::<f64>() - 0.5).collect();

    let run = |first: &[f64], second: &[f64], w_rows: Vec<f64>| {
        let mut tape = Tape::new();
        let x = tape.leaf_from(first.to_vec(), vec![first.len()]).unwrap();
        let y = tape.leaf_from(second.to_vec(), vec![second.len()]).unwrap();
        let ri = tape.concat_vec(&[x, y]).unwrap();
        let wn = tape.leaf_from(w_rows, vec![2, 5]).unwrap();
        let z = tape.matvec(wn, ri).unwrap();
        let p = tape.softmax(z);
        tape.data(p).to_vec()
    };

    let p1 = run(&a, &b, w.clone());
    // Swap column blocks: [w_a | w_b] -> [w_b | w_a] per row.
    let mut w_swapped = Vec::with_capacity(10);
    for row in 0..2 {
        w_swapped.extend_from_slice(&w[row * 5 + 3..row * 5 + 5]);
        w_swapped.extend_from_slice(&w[row * 5..row * 5 + 3]);
    }
    let p2 = run(&b, &a, w_swapped);
    for (x, y) in p1.iter().zip(&p2) {
        assert!((x - y).abs() < 1e-12);
    }
}

#[test]
fn loss_examples_and_logit_gradient() {
    assert_eq!(cross_entropy(&[0.0, 1.0], 1), 0.0);
    assert!((cross_entropy(&[0.5, 0.5], 0) - 2.0f64.ln()).abs() < 1e-12);

    // d loss / d logits = p - one_hot(label).
    let logits = vec![0.3, -1.2];
    let eval = |x: &[f64]| {
        let mut tape = Tape::new();
        let l = tape.leaf_from(x.to_vec(), vec![2]).unwrap();
        let loss = tape.cross_entropy_logits(l, 1).unwrap();
        tape.data(loss)[0]
    };
    let mut tape = Tape::new();
    let l = tape.leaf_from(logits.clone(), vec![2]).unwrap();
    let p = tape.softmax(l);
    let p = tape.data(p).to_vec();
    let loss = tape.cross_entropy_logits(l, 1).unwrap();
    tape.backward(loss).unwrap();
    let grad = tape.grad(l).unwrap();
    assert!((grad[0] - p[0]).abs() < 1e-12);
    assert!((grad[1] - (p[1] - 1.0)).abs() < 1e-12);
    for i in 0..2 {
        let fd = central_diff_at(eval, &logits, i, DEFAULT_STEP);
        assert!(close(grad[i], fd, 1e-5, 1e-9));
    }
}

#[test]
fn end_to_end_micro_model_gradients() {
    // Multi-modal micro configuration: S = 8, d_model = 8, one layer.
    let vocab = tiny_vocab();
    let spec = ModelSpec {
        modality: Modality::MultiModal,
        visual: Some(VisualExtractorKind::ResidualCnn),
        text: Some(micro_text_cfg(vocab.len())),
        image_size: 8,
        variant: VariantKind::Original,
    };
    let model = Model::init(spec, 31).unwrap();
    let mut r = rng(32);
    let tokens = tokenizer::encode("tiny hello words", &vocab, 6).unwrap();
    let input = SampleInput {
        image: Some(random_image(&mut r, 8)),
        structure_map: None,
        tokens: Some(tokens),
    };
    check_param_gradients(&model, &input, 25, 99);
}

#[test]
fn default_text_map_is_zero_on_constant_images() {
    let image = crate::raster::GrayRaster::new(12, 12, vec![0.7; 144]).unwrap();
    let map = default_text_probability_map(&image);
    assert_eq!(map.width(), 12);
    assert_eq!(map.height(), 12);
    assert!(map.pixels().iter().all(|&v| v == 0.0));
}

#[test]
fn default_text_map_lights_up_vertical_edges() {
    // Left half black, right half white: the gradient band sits at the seam.
    let mut pixels = vec![0.0; 16 * 16];
    for row in 0..16 {
        for col in 8..16 {
            pixels[row * 16 + col] = 1.0;
        }
    }
    let image = crate::raster::GrayRaster::new(16, 16, pixels).unwrap();
    let map = default_text_probability_map(&image);
    assert!(map.pixels().iter().all(|&v| (0.0..=1.0).contains(&v)));
    let seam = map.get(8, 8);
    let corner = map.get(0, 0);
    assert!(seam > corner, "seam {seam} should exceed far corner {corner}");
    assert!(seam > 0.0);
}

#[test]
fn checkpoint_round_trip_is_exact() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("model.ckpt");
    let (model, input) = text_only_model(41);
    let meta = CheckpointMeta { vocab_ref: Some("vocab.txt".into()) };
    save_checkpoint(&path, &model, &meta).unwrap();
    let (loaded, loaded_meta) = load_checkpoint(&path).unwrap();
    assert_eq!(loaded_meta, meta);
    assert_eq!(loaded.spec, model.spec);
    assert_eq!(loaded.params.len(), model.params.len());
    for ((n1, t1), (n2, t2)) in model.params.iter().zip(loaded.params.iter()) {
        assert_eq!(n1, n2);
        assert_eq!(t1.data(), t2.data());
        assert_eq!(t1.shape(), t2.shape());
    }
    assert_eq!(model.score(&input).unwrap(), loaded.score(&input).unwrap());
}

#[test]
fn checkpoint_rejects_garbage() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("junk.ckpt");
    std::fs::write(&path, b"definitely not a checkpoint").unwrap();
    assert!(matches!(load_checkpoint(&path), Err(Error::Parse(_))));
}
