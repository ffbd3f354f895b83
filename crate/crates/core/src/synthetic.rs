//! Deterministic synthetic corpora so the full pipeline can run and be
//! tested without any external data.
//!
//! Three fixtures:
//! - `multimodal`: separable in both modalities (a discriminative keyword
//!   plus a bright square in the image).
//! - `quadrant`: image-only; the class decides whether the bright quadrant
//!   sits top-left or bottom-right (Grad-CAM localization target).
//! - `xorg`: three organizations sharing one transferable keyword while each
//!   organization carries its own perfectly predictive nuisance tokens.

use std::path::Path;

use chrono::{DateTime, Duration, TimeZone, Utc};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::corpus::{
    self, image_hash, CorpusRecord, Label, Org, Split, TweetRecord,
};
use crate::raster::{write_pgm, GrayRaster};
use crate::Result;

#[derive(Debug, Clone, Copy)]
pub struct SyntheticOptions {
    /// Total record count across all splits (per organization for `xorg`).
    pub records: usize,
    /// Square side of the generated PGM images.
    pub image_size: usize,
    pub seed: u64,
}

impl Default for SyntheticOptions {
    fn default() -> Self {
        SyntheticOptions { records: 2000, image_size: 16, seed: 7 }
    }
}

/// Split fractions: 55% train, 15% validation, 15% continuous, 15% delay.
fn split_of(index: usize, total: usize) -> Split {
    let frac = index as f64 / total as f64;
    if frac < 0.55 {
        Split::Train
    } else if frac < 0.70 {
        Split::Validation
    } else if frac < 0.85 {
        Split::Continuous
    } else {
        Split::Delay
    }
}

fn timestamp_for(split: Split, index: usize) -> DateTime<Utc> {
    let (start, days) = match split {
        Split::Train => (Utc.with_ymd_and_hms(2015, 4, 1, 12, 0, 0).unwrap(), 270),
        Split::Validation => (Utc.with_ymd_and_hms(2016, 1, 1, 12, 0, 0).unwrap(), 31),
        Split::Continuous => (Utc.with_ymd_and_hms(2016, 2, 1, 12, 0, 0).unwrap(), 28),
        Split::Delay => (Utc.with_ymd_and_hms(2016, 10, 1, 12, 0, 0).unwrap(), 270),
    };
    start + Duration::days((index % days) as i64) + Duration::seconds((index % 3600) as i64)
}

const FILLER: [&str; 10] =
    ["today", "people", "watch", "this", "new", "big", "story", "share", "look", "live"];

fn filler_words(rng: &mut ChaCha8Rng, count: usize) -> Vec<&'static str> {
    (0..count).map(|_| FILLER[rng.gen_range(0..FILLER.len())]).collect()
}

fn noise_image(rng: &mut ChaCha8Rng, size: usize) -> Vec<f64> {
    (0..size * size).map(|_| rng.gen::<f64>() * 0.2).collect()
}

fn paint_square(pixels: &mut [f64], size: usize, r0: usize, c0: usize, side: usize, level: f64) {
    for r in r0..(r0 + side).min(size) {
        for c in c0..(c0 + side).min(size) {
            pixels[r * size + c] = level;
        }
    }
}

struct RecordParts {
    id: String,
    org: Org,
    dataset: Org,
    text: String,
    pixels: Option<Vec<f64>>,
    split: Split,
    index: usize,
}

fn emit(dir: &Path, parts: RecordParts, opts: &SyntheticOptions) -> Result<CorpusRecord> {
    let timestamp = timestamp_for(parts.split, parts.index);
    let mut tweet = TweetRecord::new(parts.id.clone(), parts.org, timestamp, parts.text);
    if let Some(pixels) = parts.pixels {
        let rel = format!("images/{}.pgm", parts.id);
        let path = dir.join(&rel);
        write_pgm(&path, opts.image_size, opts.image_size, &pixels)?;
        let raster = GrayRaster::new(opts.image_size, opts.image_size, pixels)?;
        tweet = tweet.with_image(rel.into(), image_hash(&raster));
    }
    Ok(CorpusRecord::from_tweet(&tweet, parts.dataset, parts.split))
}

/// Separable two-class corpus with informative text and images.
pub fn generate_multimodal(dir: &Path, opts: &SyntheticOptions) -> Result<Vec<CorpusRecord>> {
    std::fs::create_dir_all(dir.join("images"))?;
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut records = Vec::with_capacity(opts.records);
    for i in 0..opts.records {
        let sponsored = i % 2 == 0;
        let split = split_of(i, opts.records);
        let fill = filler_words(&mut rng, 2);
        let text = if sponsored {
            format!("{} {} mobilize #unity https://t.co/{i:x}", fill[0], fill[1])
        } else {
            format!("{} {} picnic #weather https://t.co/{i:x}", fill[0], fill[1])
        };
        let mut pixels = noise_image(&mut rng, opts.image_size);
        if sponsored {
            let side = (opts.image_size / 2).max(2);
            paint_square(&mut pixels, opts.image_size, 1, 1, side, 0.9);
        }
        records.push(emit(
            dir,
            RecordParts {
                id: format!("{}-{i:05}", if sponsored { "pos" } else { "neg" }),
                org: if sponsored { Org::Ira } else { Org::Background },
                dataset: Org::Ira,
                text,
                pixels: Some(pixels),
                split,
                index: i,
            },
            opts,
        )?);
    }
    corpus::write_corpus_jsonl(&dir.join("corpus.jsonl"), &records)?;
    Ok(records)
}

/// Image-only corpus where the bright top-left quadrant is the only
/// discriminative region: negatives are pure background noise.
pub fn generate_quadrant(dir: &Path, opts: &SyntheticOptions) -> Result<Vec<CorpusRecord>> {
    std::fs::create_dir_all(dir.join("images"))?;
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let size = opts.image_size;
    let half = size / 2;
    let mut records = Vec::with_capacity(opts.records);
    for i in 0..opts.records {
        let sponsored = i % 2 == 0;
        let split = split_of(i, opts.records);
        let mut pixels = noise_image(&mut rng, size);
        if sponsored {
            paint_square(&mut pixels, size, 0, 0, half, 0.95);
        }
        records.push(emit(
            dir,
            RecordParts {
                id: format!("{}-{i:05}", if sponsored { "pos" } else { "neg" }),
                org: if sponsored { Org::Ira } else { Org::Background },
                dataset: Org::Ira,
                text: format!("quadrant frame {i}"),
                pixels: Some(pixels),
                split,
                index: i,
            },
            opts,
        )?);
    }
    corpus::write_corpus_jsonl(&dir.join("corpus.jsonl"), &records)?;
    Ok(records)
}

/// Three text-only organizations. Every organization's positives carry the
/// shared keyword with probability 0.9 (negatives 0.05) plus a perfectly
/// predictive org-specific token pair; only the shared keyword transfers.
pub fn generate_xorg(dir: &Path, opts: &SyntheticOptions) -> Result<Vec<CorpusRecord>> {
    std::fs::create_dir_all(dir)?;
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let orgs = [(Org::Ira, "alpha"), (Org::Russian, "bravo"), (Org::Iranian, "carol")];
    let mut records = Vec::new();
    for (org, tag) in orgs {
        for i in 0..opts.records {
            let sponsored = i % 2 == 0;
            let split = split_of(i, opts.records);
            let fill = filler_words(&mut rng, 2);
            let shared = if sponsored {
                rng.gen::<f64>() < 0.9
            } else {
                rng.gen::<f64>() < 0.05
            };
            let mut words = vec![fill[0].to_string(), fill[1].to_string()];
            if sponsored {
                words.push(format!("push{tag}"));
            } else {
                words.push(format!("calm{tag}"));
            }
            if shared {
                words.push("signalword".to_string());
            }
            records.push(emit(
                dir,
                RecordParts {
                    id: format!("{}-{}-{i:05}", tag, if sponsored { "pos" } else { "neg" }),
                    org: if sponsored { org } else { Org::Background },
                    dataset: org,
                    text: words.join(" "),
                    pixels: None,
                    split,
                    index: i,
                },
                opts,
            )?);
        }
    }
    corpus::write_corpus_jsonl(&dir.join("corpus.jsonl"), &records)?;
    Ok(records)
}

/// Raw-input fixture for exercising `build-corpus`: unstandardized text,
/// duplicates, overlap between positives and negatives, and a few
/// non-English rows.
pub fn generate_raw_input(dir: &Path, opts: &SyntheticOptions) -> Result<usize> {
    std::fs::create_dir_all(dir.join("images"))?;
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut lines = Vec::new();
    let size = opts.image_size;
    for i in 0..opts.records {
        let sponsored = i % 2 == 0;
        let split = split_of(i, opts.records);
        let ts = timestamp_for(split, i).to_rfc3339();
        let org = if sponsored { "IRA" } else { "Background" };
        let fill = filler_words(&mut rng, 2);
        // Negatives come from the same topics, so both classes share the
        // keyword hashtags; the discriminative signal is the content word.
        let tag = if rng.gen::<f64>() < 0.7 { "#unity" } else { "#freedom" };
        let word = if sponsored { "mobilize" } else { "picnic" };
        // Every tenth row is an exact duplicate of the previous text.
        let text = if i % 10 == 9 {
            format!("RT @bot: {} {word} {tag} https://t.co/dup", fill[0])
        } else {
            format!("RT @user{i}: {} {} {word} {tag} https://t.co/x{i:x}", fill[0], fill[1])
        };
        let english = i % 17 != 16;
        let image = if i % 3 == 0 {
            let mut pixels = noise_image(&mut rng, size);
            if sponsored {
                paint_square(&mut pixels, size, 1, 1, size / 2, 0.9);
            }
            let rel = format!("images/raw-{i:05}.pgm");
            write_pgm(&dir.join(&rel), size, size, &pixels)?;
            Some(rel)
        } else {
            None
        };
        let mut obj = serde_json::json!({
            "id": format!("raw-{i:05}"),
            "org": org,
            "timestamp": ts,
            "text": text,
            "english": english,
        });
        if let Some(rel) = image {
            obj["image"] = serde_json::Value::String(rel);
        }
        lines.push(obj.to_string());
    }
    std::fs::write(dir.join("input.jsonl"), lines.join("\n") + "\n")?;
    Ok(opts.records)
}

/// Group a built corpus into per-split record lists for one dataset.
pub fn split_records(
    records: &[CorpusRecord],
    dataset: Org,
) -> (Vec<CorpusRecord>, Vec<CorpusRecord>, Vec<CorpusRecord>, Vec<CorpusRecord>) {
    let mut train = Vec::new();
    let mut validation = Vec::new();
    let mut continuous = Vec::new();
    let mut delay = Vec::new();
    for r in records.iter().filter(|r| r.dataset == dataset) {
        match r.split {
            Split::Train => train.push(r.clone()),
            Split::Validation => validation.push(r.clone()),
            Split::Continuous => continuous.push(r.clone()),
            Split::Delay => delay.push(r.clone()),
        }
    }
    (train, validation, continuous, delay)
}

/// Per-split sponsored/non-sponsored counts, for stats reporting.
pub fn count_labels(records: &[CorpusRecord]) -> (usize, usize) {
    let pos = records.iter().filter(|r| r.label == Label::Sponsored).count();
    (pos, records.len() - pos)
}
