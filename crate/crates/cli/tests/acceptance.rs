//! Acceptance suite: one test per criterion, each printing a PASS line.
//!
//! Everything runs on generated fixtures; no external data or network.

use std::collections::HashSet;
use std::path::Path;
use std::process::Command;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use propdetect::corpus::{
    self, balanced_monthly_sample, dedup, purge_positives_from_negatives, split_temporal,
    DateRange, Label, Org, SplitSpec, TweetRecord,
};
use propdetect::evaluation::{
    self, cross_org_experiment, roc_and_auc, tpr_at_zero_fpr, OrgDataset,
};
use propdetect::explain;
use propdetect::gradcheck::{central_diff, central_diff_at, close, max_rel_err, DEFAULT_STEP};
use propdetect::model::{
    Modality, Model, ModelSpec, SampleInput, TextEncoderConfig, VisualExtractorKind,
};
use propdetect::numerics::{Tape, Tensor};
use propdetect::synthetic::{self, SyntheticOptions};
use propdetect::textvariants::{apply_variant, VariantKind};
use propdetect::tokenizer::{build_vocab, encode};
use propdetect::training::{self, prepare_samples, TrainConfig, TrainSample};

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn uniform(r: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| r.gen::<f64>() * 2.0 - 1.0).collect()
}

// ── 1. Gradient suite ───────────────────────────────────────────────────

#[test]
fn criterion_01_gradient_suite() {
    let start = Instant::now();
    let mut cases = 0usize;
    let tol = 1e-5;

    // matmul: d(sum(A·B)) for random shapes.
    for seed in 0..20 {
        let mut r = rng(1000 + seed);
        let (m, k, n) = (1 + seed as usize % 3, 2 + seed as usize % 2, 2);
        let a0 = uniform(&mut r, m * k);
        let b0 = uniform(&mut r, k * n);
        let f = |a: &[f64], b: &[f64]| {
            let mut t = Tape::new();
            let an = t.leaf_from(a.to_vec(), vec![m, k]).unwrap();
            let bn = t.leaf_from(b.to_vec(), vec![k, n]).unwrap();
            let c = t.matmul(an, bn).unwrap();
            let l = t.sum(c);
            (t, an, bn, l)
        };
        let (mut t, an, bn, l) = f(&a0, &b0);
        t.backward(l).unwrap();
        let fd_a = central_diff(|x| { let (t, _, _, l) = f(x, &b0); t.data(l)[0] }, &a0, DEFAULT_STEP);
        let fd_b = central_diff(|x| { let (t, _, _, l) = f(&a0, x); t.data(l)[0] }, &b0, DEFAULT_STEP);
        assert!(max_rel_err(t.grad(an).unwrap(), &fd_a, 1e-7) < tol);
        assert!(max_rel_err(t.grad(bn).unwrap(), &fd_b, 1e-7) < tol);
        cases += 1;
    }

    // conv2d: input and kernel gradients across stride/padding mixes.
    for seed in 0..20 {
        let mut r = rng(2000 + seed);
        let (c, h, w, k, kh, kw) = (2, 4, 5, 2, 3, 2);
        let stride = 1 + seed as usize % 2;
        let padding = seed as usize % 2;
        let x0 = uniform(&mut r, c * h * w);
        let k0 = uniform(&mut r, k * c * kh * kw);
        let f = |x: &[f64], kd: &[f64]| {
            let mut t = Tape::new();
            let xn = t.leaf_from(x.to_vec(), vec![c, h, w]).unwrap();
            let kn = t.leaf_from(kd.to_vec(), vec![k, c, kh, kw]).unwrap();
            let y = t.conv2d(xn, kn, stride, padding).unwrap();
            let l = t.sum(y);
            (t, xn, kn, l)
        };
        let (mut t, xn, kn, l) = f(&x0, &k0);
        t.backward(l).unwrap();
        let fd_x = central_diff(|p| { let (t, _, _, l) = f(p, &k0); t.data(l)[0] }, &x0, DEFAULT_STEP);
        let fd_k = central_diff(|p| { let (t, _, _, l) = f(&x0, p); t.data(l)[0] }, &k0, DEFAULT_STEP);
        assert!(max_rel_err(t.grad(xn).unwrap(), &fd_x, 1e-7) < tol);
        assert!(max_rel_err(t.grad(kn).unwrap(), &fd_k, 1e-7) < tol);
        cases += 1;
    }

    // relu (off the kink), softmax, global average pooling, gram matrix.
    for seed in 0..15 {
        let mut r = rng(3000 + seed);
        let x0: Vec<f64> = (0..18)
            .map(|_| {
                let m = 0.15 + 0.8 * r.gen::<f64>();
                if r.gen::<bool>() { m } else { -m }
            })
            .collect();
        let f = |x: &[f64]| {
            let mut t = Tape::new();
            let xn = t.leaf_from(x.to_vec(), vec![2, 3, 3]).unwrap();
            let a = t.relu(xn);
            let g = t.gram_matrix(a).unwrap();
            let tri = t.triu(g).unwrap();
            let s = t.softmax(tri);
            let p = t.global_avg_pool(xn).unwrap();
            let both = t.concat_vec(&[s, p]).unwrap();
            let sq = t.mul(both, both).unwrap();
            let l = t.sum(sq);
            (t, xn, l)
        };
        let (mut t, xn, l) = f(&x0);
        t.backward(l).unwrap();
        let fd = central_diff(|p| { let (t, _, l) = f(p); t.data(l)[0] }, &x0, DEFAULT_STEP);
        assert!(max_rel_err(t.grad(xn).unwrap(), &fd, 1e-7) < tol);
        cases += 1;
    }

    // Multi-head attention with padding mask.
    for seed in 0..15 {
        let mut r = rng(4000 + seed);
        let (n, d, heads) = (4, 6, 3);
        let q0 = uniform(&mut r, n * d);
        let k0 = uniform(&mut r, n * d);
        let v0 = uniform(&mut r, n * d);
        let mask = vec![true, true, true, false];
        let f = |q: &[f64], k: &[f64], v: &[f64]| {
            let mut t = Tape::new();
            let qn = t.leaf_from(q.to_vec(), vec![n, d]).unwrap();
            let kn = t.leaf_from(k.to_vec(), vec![n, d]).unwrap();
            let vn = t.leaf_from(v.to_vec(), vec![n, d]).unwrap();
            let (o, _) = t.multi_head_attention(qn, kn, vn, heads, Some(&mask)).unwrap();
            let sq = t.mul(o, o).unwrap();
            let l = t.sum(sq);
            (t, qn, kn, vn, l)
        };
        let (mut t, qn, kn, vn, l) = f(&q0, &k0, &v0);
        t.backward(l).unwrap();
        for (node, data, which) in [(qn, &q0, 0), (kn, &k0, 1), (vn, &v0, 2)] {
            let fd = central_diff(
                |p| {
                    let (t, _, _, _, l) = match which {
                        0 => f(p, &k0, &v0),
                        1 => f(&q0, p, &v0),
                        _ => f(&q0, &k0, p),
                    };
                    t.data(l)[0]
                },
                data,
                DEFAULT_STEP,
            );
            assert!(max_rel_err(t.grad(node).unwrap(), &fd, 1e-7) < tol);
        }
        cases += 1;
    }

    // Dropout under a fixed mask (the rng is reseeded per evaluation).
    for seed in 0..10 {
        let mut r = rng(5000 + seed);
        let x0 = uniform(&mut r, 24);
        let f = |x: &[f64]| {
            let mut mask_rng = rng(999);
            let mut t = Tape::new();
            let xn = t.leaf_from(x.to_vec(), vec![24]).unwrap();
            let d = t.dropout(xn, 0.4, true, &mut mask_rng).unwrap();
            let sq = t.mul(d, d).unwrap();
            let l = t.sum(sq);
            (t, xn, l)
        };
        let (mut t, xn, l) = f(&x0);
        t.backward(l).unwrap();
        let fd = central_diff(|p| { let (t, _, l) = f(p); t.data(l)[0] }, &x0, DEFAULT_STEP);
        assert!(max_rel_err(t.grad(xn).unwrap(), &fd, 1e-7) < tol);
        cases += 1;
    }

    // End-to-end micro model: S = 8, d_model = 8, one layer, both modalities.
    let vocab = build_vocab(&["alpha beta gamma delta small words"], 48).unwrap();
    for seed in 0..5 {
        let spec = ModelSpec {
            modality: Modality::MultiModal,
            visual: Some(VisualExtractorKind::ResidualCnn),
            text: Some(TextEncoderConfig {
                layers: 1,
                heads: 2,
                d_model: 8,
                n: 6,
                vocab_size: vocab.len(),
            }),
            image_size: 8,
            variant: VariantKind::Original,
        };
        let model = Model::init(spec, 300 + seed).unwrap();
        let mut r = rng(6000 + seed);
        let image =
            Tensor::new(vec![3, 8, 8], (0..192).map(|_| r.gen::<f64>()).collect()).unwrap();
        let tokens = encode("alpha beta small", &vocab, 6).unwrap();
        let input =
            SampleInput { image: Some(image), structure_map: None, tokens: Some(tokens) };

        let mut tape = Tape::new();
        let bound = model.bind(&mut tape);
        let trace = model.forward_on(&mut tape, &bound, &input, false, 0.0, &mut r).unwrap();
        let loss = tape.cross_entropy_logits(trace.logits, 1).unwrap();
        tape.backward(loss).unwrap();

        let names: Vec<String> = model.params.iter().map(|(n, _)| n.clone()).collect();
        let mut probe_rng = rng(7000 + seed);
        for _ in 0..8 {
            let name = &names[probe_rng.gen_range(0..names.len())];
            let tensor = model.params.get(name).unwrap();
            let idx = probe_rng.gen_range(0..tensor.numel());
            let analytic = tape.grad(bound.node(name).unwrap()).unwrap()[idx];
            let eval = |data: &[f64]| {
                let mut m = model.clone();
                m.params.get_mut(name).unwrap().data_mut().copy_from_slice(data);
                let mut t = Tape::new();
                let tr = m.forward(&mut t, &input, false, 0.0, &mut rng(0)).unwrap();
                let l = t.cross_entropy_logits(tr.logits, 1).unwrap();
                t.data(l)[0]
            };
            let numeric = central_diff_at(eval, tensor.data(), idx, DEFAULT_STEP);
            assert!(
                close(analytic, numeric, tol, 1e-7),
                "micro-model {name}[{idx}]: {analytic} vs {numeric}"
            );
            cases += 1;
        }
    }

    let elapsed = start.elapsed();
    assert!(cases >= 100, "only {cases} gradient cases ran");
    assert!(elapsed.as_secs() < 60, "gradient suite took {elapsed:?}");
    println!(
        "ACCEPTANCE 1 gradient-suite: PASS ({cases} cases, rel err < 1e-5, {:.1}s)",
        elapsed.as_secs_f64()
    );
}

// ── 2. Hashtag importance oracle ────────────────────────────────────────

fn tweet(id: &str, text: &str) -> TweetRecord {
    let ts = chrono::DateTime::parse_from_rfc3339("2015-05-01T00:00:00Z")
        .unwrap()
        .with_timezone(&chrono::Utc);
    TweetRecord::new(id, Org::Ira, ts, text)
}

#[test]
fn criterion_02_hashtag_importance_oracle() {
    // Hand fixture: lists [#a,#b], [#a], [#b,#b,#c]; score(#b) = 1/2 + 2/3.
    let fixture = vec![tweet("1", "#a #b"), tweet("2", "#a"), tweet("3", "#b #b #c")];
    let got = corpus::hashtag_importance(&fixture, "#b");
    assert_eq!(got, 0.5 + 2.0 / 3.0);
    assert!((got - 7.0 / 6.0).abs() < 1e-15);

    // Brute-force recomputation on 50 random corpora.
    let mut r = rng(42);
    for case in 0..50 {
        let tweets: Vec<TweetRecord> = (0..30)
            .map(|i| {
                let n_tags = r.gen_range(0..5);
                let words: Vec<String> =
                    (0..n_tags).map(|_| format!("#h{}", r.gen_range(0..7))).collect();
                tweet(&format!("{case}-{i}"), &words.join(" "))
            })
            .collect();
        let distinct: HashSet<String> =
            tweets.iter().flat_map(|t| corpus::extract_hashtags(&t.std_text)).collect();
        for tag in &distinct {
            // Independent recomputation straight from the definition.
            let mut expected = 0.0;
            for t in &tweets {
                let tags = corpus::extract_hashtags(&t.std_text);
                if tags.is_empty() {
                    continue;
                }
                let count = tags.iter().filter(|x| *x == tag).count();
                if count > 0 {
                    expected += count as f64 / tags.len() as f64;
                }
            }
            assert_eq!(corpus::hashtag_importance(&tweets, tag), expected, "tag {tag}");
        }
        // top-k ordering agrees with a full sort of oracle scores.
        let ranked = corpus::top_k_hashtags(&tweets, distinct.len() + 5);
        let mut oracle: Vec<(String, f64)> = distinct
            .iter()
            .map(|t| (t.clone(), corpus::hashtag_importance(&tweets, t)))
            .collect();
        oracle.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then_with(|| a.0.cmp(&b.0)));
        assert_eq!(ranked, oracle);
    }
    println!("ACCEPTANCE 2 hashtag-importance-oracle: PASS (7/6 fixture + 50 random corpora)");
}

// ── 3. Textual variant round-trip ───────────────────────────────────────

#[test]
fn criterion_03_variant_round_trip() {
    let original = "#Putin's 1st New Year's \"achievement\" in #Syria URL";
    assert_eq!(
        apply_variant(original, VariantKind::Tag),
        "TAG 1st New Year's \"achievement\" in TAG URL"
    );
    assert_eq!(
        apply_variant(original, VariantKind::Miss),
        "1st New Year's \"achievement\" in URL"
    );
    assert_eq!(apply_variant(original, VariantKind::Structure), "T W W W W W T U");
    assert_eq!(apply_variant(original, VariantKind::Original), original);
    println!("ACCEPTANCE 3 variant-round-trip: PASS (Tag/Miss/Structure rows exact)");
}

// ── 4. AUC and zero-FPR oracles ─────────────────────────────────────────

#[test]
fn criterion_04_auc_and_zero_fpr_oracles() {
    let mut r = rng(4040);
    for case in 0..200 {
        let n = 2 + r.gen_range(0..49);
        let coarse = case % 2 == 0;
        let scores: Vec<f64> = (0..n)
            .map(|_| if coarse { (r.gen_range(0..7) as f64) / 6.0 } else { r.gen() })
            .collect();
        let mut labels: Vec<u8> = (0..n).map(|_| r.gen_range(0..2) as u8).collect();
        labels[0] = 1;
        if labels.iter().all(|&l| l == 1) {
            labels[n - 1] = 0;
        }

        // Pair-counting probability.
        let pos: Vec<f64> =
            scores.iter().zip(&labels).filter(|(_, &l)| l == 1).map(|(&s, _)| s).collect();
        let neg: Vec<f64> =
            scores.iter().zip(&labels).filter(|(_, &l)| l == 0).map(|(&s, _)| s).collect();
        let mut pairs = 0.0;
        for &p in &pos {
            for &q in &neg {
                if p > q {
                    pairs += 1.0;
                } else if p == q {
                    pairs += 0.5;
                }
            }
        }
        let oracle_auc = pairs / (pos.len() * neg.len()) as f64;
        let (_, auc) = roc_and_auc(&scores, &labels).unwrap();
        assert!((auc - oracle_auc).abs() < 1e-9, "case {case}: {auc} vs {oracle_auc}");

        // Brute-force zero-FPR threshold scan.
        let mut best = 0.0f64;
        for &t in &scores {
            let fp = scores.iter().zip(&labels).filter(|(&s, &l)| l == 0 && s > t).count();
            if fp == 0 {
                let tp = scores.iter().zip(&labels).filter(|(&s, &l)| l == 1 && s > t).count();
                best = best.max(tp as f64 / pos.len() as f64);
            }
        }
        assert_eq!(tpr_at_zero_fpr(&scores, &labels).unwrap(), best, "case {case}");
    }
    println!("ACCEPTANCE 4 auc-and-zero-fpr-oracles: PASS (200 instances within 1e-9)");
}

// ── 5. Synthetic learnability ───────────────────────────────────────────

struct Fixture {
    train: Vec<TrainSample>,
    val: Vec<TrainSample>,
    test: Vec<TrainSample>,
}

fn prepare_fixture(
    dir: &Path,
    records: &[corpus::CorpusRecord],
    spec: &ModelSpec,
    vocab: Option<&propdetect::tokenizer::Vocab>,
) -> Fixture {
    let pick = |split: corpus::Split| -> Vec<TrainSample> {
        let recs: Vec<corpus::CorpusRecord> =
            records.iter().filter(|r| r.split == split).cloned().collect();
        prepare_samples(&recs, dir, spec, vocab, None).unwrap()
    };
    Fixture {
        train: pick(corpus::Split::Train),
        val: pick(corpus::Split::Validation),
        test: pick(corpus::Split::Continuous),
    }
}

fn f1_of(model: &Model, samples: &[TrainSample]) -> f64 {
    let scores = training::predict_scores(model, samples).unwrap();
    let labels: Vec<u8> = samples.iter().map(|s| s.label).collect();
    evaluation::f1_score(&scores, &labels).unwrap()
}

#[test]
fn criterion_05_synthetic_learnability() {
    let dir = tempfile::tempdir().unwrap();
    let opts = SyntheticOptions { records: 2000, image_size: 16, seed: 505 };
    let records = synthetic::generate_multimodal(dir.path(), &opts).unwrap();
    assert_eq!(records.len(), 2000);

    let train_recs: Vec<corpus::CorpusRecord> = records
        .iter()
        .filter(|r| r.split == corpus::Split::Train)
        .cloned()
        .collect();
    let vocab =
        build_vocab(&training::variant_texts(&train_recs, VariantKind::Original), 400).unwrap();
    let text_cfg =
        TextEncoderConfig { layers: 2, heads: 4, d_model: 64, n: 16, vocab_size: vocab.len() };
    let cfg = TrainConfig {
        learning_rate: 0.1,
        batch_size: 32,
        max_epochs: 50,
        patience: 2,
        seed: 1,
        dropout: 0.1,
        early_stop: true,
    };

    // Multi-modal: ResidualCNN + Original, timed on this thread.
    let multi_spec = ModelSpec {
        modality: Modality::MultiModal,
        visual: Some(VisualExtractorKind::ResidualCnn),
        text: Some(text_cfg),
        image_size: 16,
        variant: VariantKind::Original,
    };
    let fixture = prepare_fixture(dir.path(), &records, &multi_spec, Some(&vocab));
    let started = Instant::now();
    let (multi_model, history) =
        training::train(multi_spec, &fixture.train, &fixture.val, &cfg).unwrap();
    let train_time = started.elapsed();
    let multi_f1 = f1_of(&multi_model, &fixture.test);
    assert!(history.len() <= 50);
    assert!(
        train_time.as_secs() < 600,
        "multi-modal training took {train_time:?} (budget 10 min)"
    );
    assert!(multi_f1 >= 0.95, "multi-modal held-out F1 {multi_f1} < 0.95");

    // Image-only.
    let image_spec = ModelSpec {
        modality: Modality::ImageOnly,
        visual: Some(VisualExtractorKind::ResidualCnn),
        text: None,
        image_size: 16,
        variant: VariantKind::Original,
    };
    let image_fixture = prepare_fixture(dir.path(), &records, &image_spec, None);
    let (image_model, _) =
        training::train(image_spec, &image_fixture.train, &image_fixture.val, &cfg).unwrap();
    let image_f1 = f1_of(&image_model, &image_fixture.test);
    assert!(image_f1 >= 0.80, "image-only F1 {image_f1} < 0.80");

    // Text-only.
    let text_spec = ModelSpec {
        modality: Modality::TextOnly,
        visual: None,
        text: Some(text_cfg),
        image_size: 16,
        variant: VariantKind::Original,
    };
    let text_fixture = prepare_fixture(dir.path(), &records, &text_spec, Some(&vocab));
    let (text_model, _) =
        training::train(text_spec, &text_fixture.train, &text_fixture.val, &cfg).unwrap();
    let text_f1 = f1_of(&text_model, &text_fixture.test);
    assert!(text_f1 >= 0.80, "text-only F1 {text_f1} < 0.80");

    assert!(
        multi_f1 >= image_f1.max(text_f1) - 0.02,
        "multi {multi_f1} below max(image {image_f1}, text {text_f1}) - 0.02"
    );
    println!(
        "ACCEPTANCE 5 synthetic-learnability: PASS (multi {multi_f1:.3} in {:.0}s, image {image_f1:.3}, text {text_f1:.3})",
        train_time.as_secs_f64()
    );
}

// ── 6. Corpus invariants ────────────────────────────────────────────────

#[test]
fn criterion_06_corpus_invariants() {
    let mut r = rng(606);
    let base = chrono::DateTime::parse_from_rfc3339("2015-04-01T00:00:00Z")
        .unwrap()
        .with_timezone(&chrono::Utc);
    let spec = SplitSpec {
        train: DateRange { start: base, end: base + chrono::Duration::days(200) },
        validation: DateRange {
            start: base + chrono::Duration::days(200),
            end: base + chrono::Duration::days(260),
        },
        continuous: DateRange {
            start: base + chrono::Duration::days(260),
            end: base + chrono::Duration::days(320),
        },
        delay: DateRange {
            start: base + chrono::Duration::days(400),
            end: base + chrono::Duration::days(500),
        },
    };

    for case in 0..100 {
        let make = |r: &mut ChaCha8Rng, org: Org, tag: &str, count: usize| -> Vec<TweetRecord> {
            (0..count)
                .map(|i| {
                    let day = r.gen_range(0..500);
                    let ts = base + chrono::Duration::days(day);
                    let text = format!("{tag} body {} #k{}", r.gen_range(0..12), r.gen_range(0..4));
                    let mut t =
                        TweetRecord::new(format!("{tag}-{case}-{i}"), org, ts, text);
                    if r.gen::<bool>() {
                        t = t.with_image("x.pgm".into(), r.gen_range(0..10));
                    }
                    t
                })
                .collect()
        };
        let positives = make(&mut r, Org::Ira, "pos", 40);
        let negatives = make(&mut r, Org::Background, "neg", 50);

        // Dedup idempotence.
        let pos = dedup(positives);
        let once_ids: Vec<String> = pos.iter().map(|t| t.id.clone()).collect();
        let twice: Vec<String> = dedup(pos.clone()).iter().map(|t| t.id.clone()).collect();
        assert_eq!(once_ids, twice);

        // Purge emptiness by set oracle.
        let neg = dedup(negatives);
        let purged = purge_positives_from_negatives(neg, &pos);
        let pos_texts: HashSet<&str> = pos.iter().map(|t| t.std_text.as_str()).collect();
        let pos_hashes: HashSet<u64> = pos.iter().filter_map(|t| t.image_hash).collect();
        for n in &purged {
            assert!(!pos_texts.contains(n.std_text.as_str()), "text leak in case {case}");
            if let Some(h) = n.image_hash {
                assert!(!pos_hashes.contains(&h), "hash leak in case {case}");
            }
        }

        // Balanced sampling: per-month label parity.
        let balanced = balanced_monthly_sample(pos, purged, &mut r);
        let mut by_month: std::collections::BTreeMap<(i32, u32), (usize, usize)> =
            Default::default();
        for t in &balanced {
            use chrono::Datelike;
            let key = (t.timestamp.year(), t.timestamp.month());
            let entry = by_month.entry(key).or_default();
            if t.label() == Label::Sponsored {
                entry.0 += 1;
            } else {
                entry.1 += 1;
            }
        }
        for (month, (p, n)) in &by_month {
            assert_eq!(p, n, "case {case}: month {month:?} unbalanced");
        }

        // Split disjointness.
        let total = balanced.len();
        let splits = split_temporal(balanced, &spec).unwrap();
        let mut all: Vec<&str> = splits
            .train
            .iter()
            .chain(&splits.validation)
            .chain(&splits.continuous)
            .chain(&splits.delay)
            .map(|t| t.id.as_str())
            .collect();
        assert!(all.len() <= total);
        let before = all.len();
        all.sort_unstable();
        all.dedup();
        assert_eq!(all.len(), before, "case {case}: splits overlap");
    }
    println!("ACCEPTANCE 6 corpus-invariants: PASS (100 randomized fixtures)");
}

// ── 7. Grad-CAM localization ────────────────────────────────────────────

#[test]
fn criterion_07_grad_cam_localization() {
    let dir = tempfile::tempdir().unwrap();
    let opts = SyntheticOptions { records: 400, image_size: 16, seed: 707 };
    let records = synthetic::generate_quadrant(dir.path(), &opts).unwrap();

    let spec = ModelSpec {
        modality: Modality::ImageOnly,
        visual: Some(VisualExtractorKind::ResidualCnn),
        text: None,
        image_size: 16,
        variant: VariantKind::Original,
    };
    let fixture = prepare_fixture(dir.path(), &records, &spec, None);
    let cfg = TrainConfig {
        learning_rate: 0.1,
        batch_size: 32,
        max_epochs: 12,
        patience: 3,
        seed: 2,
        dropout: 0.0,
        early_stop: true,
    };
    let (model, _) = training::train(spec, &fixture.train, &fixture.val, &cfg).unwrap();

    // The 20 first positive test images; their hot quadrant is top-left.
    let positives: Vec<&TrainSample> =
        fixture.test.iter().filter(|s| s.label == 1).take(20).collect();
    assert_eq!(positives.len(), 20);
    let mut fractions = Vec::new();
    for sample in positives {
        let map = explain::grad_cam(&model, &sample.input, 1).unwrap();
        assert!(map.heatmap.iter().all(|&v| v >= 0.0), "negative heatmap value");
        let s = map.size;
        let total: f64 = map.heatmap.iter().sum();
        let mut inside = 0.0;
        for row in 0..s / 2 {
            for col in 0..s / 2 {
                inside += map.heatmap[row * s + col];
            }
        }
        fractions.push(if total > 0.0 { inside / total } else { 0.0 });
    }
    let mean: f64 = fractions.iter().sum::<f64>() / fractions.len() as f64;
    assert!(
        mean >= 0.60,
        "mean heatmap mass in the true quadrant is {mean:.3} (< 0.60): {fractions:?}"
    );
    println!("ACCEPTANCE 7 grad-cam-localization: PASS (mean quadrant mass {mean:.3})");
}

// ── 8. Attention importance ─────────────────────────────────────────────

#[test]
fn criterion_08_attention_importance() {
    let vocab = build_vocab(&["stand strong with the cause tonight"], 80).unwrap();
    let spec = ModelSpec {
        modality: Modality::TextOnly,
        visual: None,
        text: Some(TextEncoderConfig {
            layers: 2,
            heads: 4,
            d_model: 32,
            n: 12,
            vocab_size: vocab.len(),
        }),
        image_size: 16,
        variant: VariantKind::Original,
    };
    let model = Model::init(spec, 808).unwrap();

    for (i, text) in
        ["stand strong", "with the cause tonight", "strong cause", "tonight"].iter().enumerate()
    {
        let tokens = encode(text, &vocab, 12).unwrap();
        let importance = explain::attention_importance(&model, &tokens).unwrap();
        let total: f64 = importance.scores.iter().sum();
        assert!((total - 1.0).abs() < 1e-9, "case {i}: scores sum to {total}");

        // Direct inspection of the aggregation input: the [SEP] row is zero.
        let attention = model.text_attention(&tokens).unwrap();
        let sep = tokens.sep_position();
        let matrix = explain::head_average_and_zero_sep(attention.last().unwrap(), sep);
        let n = tokens.len();
        assert!(matrix[sep * n..(sep + 1) * n].iter().all(|&v| v == 0.0));
        // And the unzeroed rows still carry their softmax mass.
        let cls_row: f64 = matrix[..n].iter().sum();
        assert!((cls_row - 1.0).abs() < 1e-9);
    }
    println!("ACCEPTANCE 8 attention-importance: PASS (softmax sums + zeroed [SEP] row)");
}

// ── 9. Generalizability direction ───────────────────────────────────────

#[test]
fn criterion_09_generalizability_direction() {
    let dir = tempfile::tempdir().unwrap();
    let opts = SyntheticOptions { records: 240, image_size: 8, seed: 21 };
    let records = synthetic::generate_xorg(dir.path(), &opts).unwrap();

    let all_train: Vec<corpus::CorpusRecord> = records
        .iter()
        .filter(|r| r.split == corpus::Split::Train)
        .cloned()
        .collect();
    let vocab = build_vocab(&training::variant_texts(&all_train, VariantKind::Original), 300)
        .unwrap();
    let spec = ModelSpec {
        modality: Modality::TextOnly,
        visual: None,
        text: Some(TextEncoderConfig {
            layers: 1,
            heads: 2,
            d_model: 32,
            n: 12,
            vocab_size: vocab.len(),
        }),
        image_size: 8,
        variant: VariantKind::Original,
    };

    let mut org_sets = Vec::new();
    for org in [Org::Ira, Org::Russian, Org::Iranian] {
        let (train, val, cont, delay) = synthetic::split_records(&records, org);
        org_sets.push(OrgDataset {
            org,
            train: prepare_samples(&train, dir.path(), &spec, Some(&vocab), None).unwrap(),
            validation: prepare_samples(&val, dir.path(), &spec, Some(&vocab), None).unwrap(),
            continuous: prepare_samples(&cont, dir.path(), &spec, Some(&vocab), None).unwrap(),
            delay: prepare_samples(&delay, dir.path(), &spec, Some(&vocab), None).unwrap(),
        });
    }
    let org_sets: [OrgDataset; 3] = org_sets.try_into().map_err(|_| ()).unwrap();

    let cfg = TrainConfig {
        learning_rate: 0.15,
        batch_size: 16,
        max_epochs: 12,
        patience: 4,
        seed: 2,
        dropout: 0.05,
        early_stop: true,
    };
    let rows = cross_org_experiment(&org_sets, &spec, &cfg).unwrap();
    assert_eq!(rows.len(), 3);
    for row in &rows {
        for v in [
            row.baseline_continuous,
            row.multi_continuous,
            row.baseline_delay,
            row.multi_delay,
        ] {
            assert!((0.0..=1.0).contains(&v));
        }
        assert!(
            row.multi_continuous >= row.baseline_continuous,
            "{}: continuous multi {} < baseline {}",
            row.target.as_str(),
            row.multi_continuous,
            row.baseline_continuous
        );
        assert!(
            row.multi_delay >= row.baseline_delay,
            "{}: delay multi {} < baseline {}",
            row.target.as_str(),
            row.multi_delay,
            row.baseline_delay
        );
    }
    println!("ACCEPTANCE 9 generalizability-direction: PASS (multi >= baseline, 3 orgs x 2 splits)");
}

// ── 10. Command determinism ─────────────────────────────────────────────

fn run(cmd: &mut Command) {
    let output = cmd.output().expect("command runs");
    assert!(
        output.status.success(),
        "command failed:\nstdout: {}\nstderr: {}",
        String::from_utf8_lossy(&output.stdout),
        String::from_utf8_lossy(&output.stderr)
    );
}

fn assert_same_bytes(a: &Path, b: &Path) {
    let left = std::fs::read(a).unwrap();
    let right = std::fs::read(b).unwrap();
    assert_eq!(left, right, "{} differs from {}", a.display(), b.display());
}

#[test]
fn criterion_10_command_determinism() {
    let bin = env!("CARGO_BIN_EXE_propdetect");
    let dir = tempfile::tempdir().unwrap();
    let base = dir.path();

    for pass in ["a", "b"] {
        let data = base.join(format!("data-{pass}"));
        run(Command::new(bin).args([
            "make-synthetic",
            "--kind",
            "multimodal",
            "--records",
            "120",
            "--image-size",
            "12",
            "--seed",
            "5",
            "--out",
            data.to_str().unwrap(),
        ]));
        let train_out = base.join(format!("train-{pass}"));
        run(Command::new(bin).args([
            "train",
            "--corpus",
            data.join("corpus.jsonl").to_str().unwrap(),
            "--modality",
            "text",
            "--seq-len",
            "16",
            "--text-layers",
            "1",
            "--text-d-model",
            "16",
            "--text-heads",
            "2",
            "--max-epochs",
            "2",
            "--patience",
            "1",
            "--batch-size",
            "16",
            "--seed",
            "3",
            "--out",
            train_out.to_str().unwrap(),
        ]));
        let eval_out = base.join(format!("eval-{pass}"));
        run(Command::new(bin).args([
            "evaluate",
            "--checkpoint",
            train_out.join("checkpoint.bin").to_str().unwrap(),
            "--corpus",
            data.join("corpus.jsonl").to_str().unwrap(),
            "--splits",
            "continuous,delay",
            "--out",
            eval_out.to_str().unwrap(),
        ]));
        let explain_out = base.join(format!("explain-{pass}"));
        run(Command::new(bin).args([
            "explain",
            "--checkpoint",
            train_out.join("checkpoint.bin").to_str().unwrap(),
            "--corpus",
            data.join("corpus.jsonl").to_str().unwrap(),
            "--record",
            "pos-00000",
            "--out",
            explain_out.to_str().unwrap(),
        ]));
    }

    assert_same_bytes(&base.join("data-a/corpus.jsonl"), &base.join("data-b/corpus.jsonl"));
    assert_same_bytes(
        &base.join("data-a/images/pos-00000.pgm"),
        &base.join("data-b/images/pos-00000.pgm"),
    );
    for file in ["checkpoint.bin", "history.csv", "vocab.txt"] {
        assert_same_bytes(
            &base.join("train-a").join(file),
            &base.join("train-b").join(file),
        );
    }
    for file in ["metrics.csv", "roc_text-original_continuous.csv", "roc_text-original_delay.csv"]
    {
        assert_same_bytes(&base.join("eval-a").join(file), &base.join("eval-b").join(file));
    }
    assert_same_bytes(
        &base.join("explain-a/words_pos-00000.csv"),
        &base.join("explain-b/words_pos-00000.csv"),
    );
    println!("ACCEPTANCE 10 command-determinism: PASS (byte-identical reruns)");
}
