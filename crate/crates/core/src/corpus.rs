//! Corpus construction: standardization, hashtag keywords, deduplication,
//! balanced sampling, and temporal splits.

use std::collections::{BTreeMap, HashSet};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::LazyLock;

use chrono::{DateTime, Datelike, Utc};
use rand::Rng;
use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::raster::GrayRaster;
use crate::{Error, Result};

/// Sentinel substituted for URLs during standardization.
pub const URL_SENTINEL: &str = "URL";

/// Source organization of a post.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Org {
    #[serde(rename = "IRA")]
    Ira,
    Russian,
    Iranian,
    Background,
}

impl Org {
    pub fn as_str(&self) -> &'static str {
        match self {
            Org::Ira => "IRA",
            Org::Russian => "Russian",
            Org::Iranian => "Iranian",
            Org::Background => "Background",
        }
    }

    pub fn parse(s: &str) -> Result<Org> {
        match s {
            "IRA" | "ira" => Ok(Org::Ira),
            "Russian" | "russian" => Ok(Org::Russian),
            "Iranian" | "iranian" => Ok(Org::Iranian),
            "Background" | "background" => Ok(Org::Background),
            other => Err(Error::Parse(format!("unknown organization '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Label {
    Sponsored,
    NonSponsored,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Validation,
    Continuous,
    Delay,
}

impl Split {
    pub fn as_str(&self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Validation => "validation",
            Split::Continuous => "continuous",
            Split::Delay => "delay",
        }
    }
}

/// One labeled post with derived fields populated.
#[derive(Debug, Clone)]
pub struct TweetRecord {
    pub id: String,
    pub org: Org,
    pub timestamp: DateTime<Utc>,
    pub raw_text: String,
    pub std_text: String,
    pub image_ref: Option<PathBuf>,
    pub image_hash: Option<u64>,
    pub english: bool,
}

impl TweetRecord {
    pub fn new(
        id: impl Into<String>,
        org: Org,
        timestamp: DateTime<Utc>,
        raw_text: impl Into<String>,
    ) -> Self {
        let raw_text = raw_text.into();
        let std_text = standardize_text(&raw_text);
        TweetRecord {
            id: id.into(),
            org,
            timestamp,
            raw_text,
            std_text,
            image_ref: None,
            image_hash: None,
            english: true,
        }
    }

    pub fn with_image(mut self, path: PathBuf, hash: u64) -> Self {
        self.image_ref = Some(path);
        self.image_hash = Some(hash);
        self
    }

    /// Sponsored exactly when the post is not background noise.
    pub fn label(&self) -> Label {
        if self.org == Org::Background {
            Label::NonSponsored
        } else {
            Label::Sponsored
        }
    }

    fn order_key(&self) -> (DateTime<Utc>, &str) {
        (self.timestamp, &self.id)
    }

    fn month_key(&self) -> (i32, u32) {
        (self.timestamp.year(), self.timestamp.month())
    }
}

// ── Text standardization ────────────────────────────────────────────────

static URL_RE: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"https?://\S+").unwrap());
static RT_USER_RE: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"^(RT|rt)\s+@\S+\s*").unwrap());
static RT_RE: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"^(RT|rt)(\s+|$)").unwrap());

/// Standardize a post: URLs become the sentinel, leading retweet prefixes
/// are dropped (repeatedly, so the result is a fixpoint), and whitespace is
/// collapsed.
pub fn standardize_text(raw: &str) -> String {
    let mut text = URL_RE.replace_all(raw, URL_SENTINEL).into_owned();
    loop {
        let current = text.trim_start();
        let next = if let Some(m) = RT_USER_RE.find(current) {
            current[m.end()..].to_string()
        } else if let Some(m) = RT_RE.find(current) {
            current[m.end()..].to_string()
        } else {
            break;
        };
        text = next;
    }
    text.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Whether a whitespace token counts as a hashtag.
pub fn is_hashtag_token(token: &str) -> bool {
    token.starts_with('#')
}

/// Hashtags of a standardized text: '#'-initial tokens, trailing punctuation
/// stripped, lowercased, duplicates preserved in order.
pub fn extract_hashtags(std_text: &str) -> Vec<String> {
    std_text
        .split_whitespace()
        .filter(|t| is_hashtag_token(t))
        .map(|t| t.trim_end_matches(['.', ',', '!', '?', ':', ';', '"', '\'']).to_lowercase())
        .collect()
}

/// Per-tweet hashtag lists of the given records, in record order.
fn hashtag_lists(records: &[TweetRecord]) -> Vec<Vec<String>> {
    records.iter().map(|r| extract_hashtags(&r.std_text)).collect()
}

/// Importance of one hashtag: sum over tweets of (occurrences / total
/// hashtags in that tweet); tweets without hashtags contribute nothing.
pub fn hashtag_importance(sponsored: &[TweetRecord], hashtag: &str) -> f64 {
    let needle = hashtag.to_lowercase();
    let mut score = 0.0;
    for tags in hashtag_lists(sponsored) {
        if tags.is_empty() {
            continue;
        }
        let count = tags.iter().filter(|t| **t == needle).count();
        if count > 0 {
            score += count as f64 / tags.len() as f64;
        }
    }
    score
}

/// Hashtags ranked by importance (descending), ties broken lexicographically
/// ascending. Returns fewer than `k` if fewer distinct hashtags exist.
pub fn top_k_hashtags(sponsored: &[TweetRecord], k: usize) -> Vec<(String, f64)> {
    // Accumulate per tag in tweet order so scores are bitwise identical to
    // hashtag_importance (skipped zero contributions are exact no-ops).
    let mut scores: BTreeMap<String, f64> = BTreeMap::new();
    for tags in hashtag_lists(sponsored) {
        if tags.is_empty() {
            continue;
        }
        let total = tags.len() as f64;
        let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
        for t in &tags {
            *counts.entry(t).or_insert(0) += 1;
        }
        for (tag, count) in counts {
            *scores.entry(tag.to_string()).or_insert(0.0) += count as f64 / total;
        }
    }
    let mut ranked: Vec<(String, f64)> = scores.into_iter().collect();
    ranked.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then_with(|| a.0.cmp(&b.0)));
    ranked.truncate(k);
    ranked
}

// ── Image hashing ───────────────────────────────────────────────────────

/// Average hash: 8×8 box-filter downscale, one bit per cell set when the
/// cell strictly exceeds the 64-cell mean, packed row-major MSB-first.
pub fn image_hash(raster: &GrayRaster) -> u64 {
    let (w, h) = (raster.width(), raster.height());
    let mut cells = [0.0f64; 64];
    for by in 0..8 {
        // Box partition; for rasters narrower than 8 a box repeats one line.
        let y0 = by * h / 8;
        let y1 = ((by + 1) * h / 8).max(y0 + 1);
        for bx in 0..8 {
            let x0 = bx * w / 8;
            let x1 = ((bx + 1) * w / 8).max(x0 + 1);
            let mut total = 0.0;
            let mut n = 0usize;
            for y in y0..y1 {
                for x in x0..x1 {
                    total += raster.get(y, x);
                    n += 1;
                }
            }
            cells[by * 8 + bx] = total / n as f64;
        }
    }
    let mean = cells.iter().sum::<f64>() / 64.0;
    let mut hash = 0u64;
    for &cell in &cells {
        hash <<= 1;
        if cell > mean {
            hash |= 1;
        }
    }
    hash
}

pub fn format_hash(hash: u64) -> String {
    format!("{hash:016x}")
}

pub fn parse_hash(s: &str) -> Result<u64> {
    u64::from_str_radix(s, 16).map_err(|e| Error::Parse(format!("bad image hash '{s}': {e}")))
}

// ── Deduplication and purging ───────────────────────────────────────────

/// Drop records whose standardized text or image hash was already seen,
/// scanning in (timestamp, id) order. Empty texts and absent hashes do not
/// participate in their respective checks.
pub fn dedup(mut records: Vec<TweetRecord>) -> Vec<TweetRecord> {
    records.sort_by(|a, b| a.order_key().cmp(&b.order_key()));
    let mut seen_text: HashSet<String> = HashSet::new();
    let mut seen_hash: HashSet<u64> = HashSet::new();
    let mut kept = Vec::with_capacity(records.len());
    for record in records {
        let text_dup = !record.std_text.is_empty() && seen_text.contains(&record.std_text);
        let hash_dup = record.image_hash.is_some_and(|h| seen_hash.contains(&h));
        if text_dup || hash_dup {
            continue;
        }
        if !record.std_text.is_empty() {
            seen_text.insert(record.std_text.clone());
        }
        if let Some(h) = record.image_hash {
            seen_hash.insert(h);
        }
        kept.push(record);
    }
    kept
}

/// Remove negatives that share a standardized text or image hash with any
/// positive.
pub fn purge_positives_from_negatives(
    negatives: Vec<TweetRecord>,
    positives: &[TweetRecord],
) -> Vec<TweetRecord> {
    let pos_texts: HashSet<&str> = positives
        .iter()
        .filter(|r| !r.std_text.is_empty())
        .map(|r| r.std_text.as_str())
        .collect();
    let pos_hashes: HashSet<u64> = positives.iter().filter_map(|r| r.image_hash).collect();
    negatives
        .into_iter()
        .filter(|r| {
            let text_hit = !r.std_text.is_empty() && pos_texts.contains(r.std_text.as_str());
            let hash_hit = r.image_hash.is_some_and(|h| pos_hashes.contains(&h));
            !text_hit && !hash_hit
        })
        .collect()
}

/// Keep records whose hashtags intersect the keyword list.
pub fn filter_by_keywords(
    records: Vec<TweetRecord>,
    keywords: &[String],
) -> Result<Vec<TweetRecord>> {
    if keywords.is_empty() {
        return Err(Error::Config("keyword filter requires a non-empty keyword list".into()));
    }
    let wanted: HashSet<&str> = keywords.iter().map(|s| s.as_str()).collect();
    Ok(records
        .into_iter()
        .filter(|r| extract_hashtags(&r.std_text).iter().any(|t| wanted.contains(t.as_str())))
        .collect())
}

// ── Balanced sampling ───────────────────────────────────────────────────

/// Per calendar month, keep min(|pos|, |neg|) records from each side,
/// sampling the larger side uniformly without replacement.
pub fn balanced_monthly_sample<R: Rng>(
    pos: Vec<TweetRecord>,
    neg: Vec<TweetRecord>,
    rng: &mut R,
) -> Vec<TweetRecord> {
    let mut months: BTreeMap<(i32, u32), (Vec<TweetRecord>, Vec<TweetRecord>)> = BTreeMap::new();
    for r in pos {
        months.entry(r.month_key()).or_default().0.push(r);
    }
    for r in neg {
        months.entry(r.month_key()).or_default().1.push(r);
    }
    let mut out = Vec::new();
    for (_, (mut p, mut n)) in months {
        p.sort_by(|a, b| a.order_key().cmp(&b.order_key()));
        n.sort_by(|a, b| a.order_key().cmp(&b.order_key()));
        let m = p.len().min(n.len());
        out.extend(sample_without_replacement(p, m, rng));
        out.extend(sample_without_replacement(n, m, rng));
    }
    out
}

fn sample_without_replacement<R: Rng>(
    mut records: Vec<TweetRecord>,
    m: usize,
    rng: &mut R,
) -> Vec<TweetRecord> {
    if records.len() <= m {
        return records;
    }
    // Partial Fisher-Yates over indices, then restore chronological order.
    let len = records.len();
    let mut idx: Vec<usize> = (0..len).collect();
    for i in 0..m {
        let j = i + rng.gen_range(0..len - i);
        idx.swap(i, j);
    }
    let mut chosen: Vec<usize> = idx[..m].to_vec();
    chosen.sort_unstable();
    let mut keep = vec![false; len];
    for c in chosen {
        keep[c] = true;
    }
    let mut out = Vec::with_capacity(m);
    for (i, r) in records.drain(..).enumerate() {
        if keep[i] {
            out.push(r);
        }
    }
    out
}

// ── Temporal splits ─────────────────────────────────────────────────────

/// Half-open UTC time range.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DateRange {
    pub start: DateTime<Utc>,
    pub end: DateTime<Utc>,
}

impl DateRange {
    pub fn contains(&self, t: DateTime<Utc>) -> bool {
        self.start <= t && t < self.end
    }
}

/// The four split windows: train, validation, continuous test, delay test.
#[derive(Debug, Clone, Copy)]
pub struct SplitSpec {
    pub train: DateRange,
    pub validation: DateRange,
    pub continuous: DateRange,
    pub delay: DateRange,
}

impl SplitSpec {
    /// Ranges must be non-empty, ordered train < validation < continuous,
    /// with the delay window disjoint and later still.
    pub fn validate(&self) -> Result<()> {
        let ranges = [
            ("train", self.train),
            ("validation", self.validation),
            ("continuous", self.continuous),
            ("delay", self.delay),
        ];
        for (name, r) in &ranges {
            if r.start >= r.end {
                return Err(Error::Config(format!("{name} range is empty or reversed")));
            }
        }
        for w in ranges.windows(2) {
            let ((a_name, a), (b_name, b)) = (w[0], w[1]);
            if a.end > b.start {
                return Err(Error::Config(format!(
                    "{a_name} range overlaps or follows {b_name} range"
                )));
            }
        }
        Ok(())
    }

    pub fn classify(&self, t: DateTime<Utc>) -> Option<Split> {
        if self.train.contains(t) {
            Some(Split::Train)
        } else if self.validation.contains(t) {
            Some(Split::Validation)
        } else if self.continuous.contains(t) {
            Some(Split::Continuous)
        } else if self.delay.contains(t) {
            Some(Split::Delay)
        } else {
            None
        }
    }
}

/// Records partitioned by split membership; out-of-range records are dropped.
#[derive(Debug, Default)]
pub struct SplitCorpus {
    pub train: Vec<TweetRecord>,
    pub validation: Vec<TweetRecord>,
    pub continuous: Vec<TweetRecord>,
    pub delay: Vec<TweetRecord>,
}

pub fn split_temporal(records: Vec<TweetRecord>, spec: &SplitSpec) -> Result<SplitCorpus> {
    spec.validate()?;
    let mut out = SplitCorpus::default();
    for r in records {
        match spec.classify(r.timestamp) {
            Some(Split::Train) => out.train.push(r),
            Some(Split::Validation) => out.validation.push(r),
            Some(Split::Continuous) => out.continuous.push(r),
            Some(Split::Delay) => out.delay.push(r),
            None => {}
        }
    }
    Ok(out)
}

// ── JSONL interchange ───────────────────────────────────────────────────

/// One line of raw input JSONL.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InputRecord {
    pub id: String,
    pub org: Org,
    pub timestamp: DateTime<Utc>,
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub image: Option<String>,
    #[serde(default = "default_true")]
    pub english: bool,
}

fn default_true() -> bool {
    true
}

/// One line of built-corpus JSONL: the input fields plus derived columns.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CorpusRecord {
    pub id: String,
    pub org: Org,
    /// Sub-dataset this row belongs to (negatives keep `org = Background`).
    pub dataset: Org,
    pub timestamp: DateTime<Utc>,
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub image: Option<String>,
    #[serde(default = "default_true")]
    pub english: bool,
    pub std_text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub image_hash: Option<String>,
    pub label: Label,
    pub split: Split,
}

impl CorpusRecord {
    pub fn from_tweet(record: &TweetRecord, dataset: Org, split: Split) -> Self {
        CorpusRecord {
            id: record.id.clone(),
            org: record.org,
            dataset,
            timestamp: record.timestamp,
            text: record.raw_text.clone(),
            image: record.image_ref.as_ref().map(|p| p.to_string_lossy().into_owned()),
            english: record.english,
            std_text: record.std_text.clone(),
            image_hash: record.image_hash.map(format_hash),
            label: record.label(),
            split,
        }
    }

    pub fn to_tweet(&self) -> Result<TweetRecord> {
        let mut t = TweetRecord::new(self.id.clone(), self.org, self.timestamp, self.text.clone());
        t.english = self.english;
        t.std_text = self.std_text.clone();
        if let Some(img) = &self.image {
            t.image_ref = Some(PathBuf::from(img));
        }
        if let Some(h) = &self.image_hash {
            t.image_hash = Some(parse_hash(h)?);
        }
        Ok(t)
    }
}

/// Read raw input JSONL; parse failures name the 1-based line number.
pub fn read_input_jsonl(path: &Path) -> Result<Vec<InputRecord>> {
    let file = std::fs::File::open(path)
        .map_err(|e| Error::Input(format!("cannot open {}: {e}", path.display())))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let record: InputRecord = serde_json::from_str(&line)
            .map_err(|e| Error::Parse(format!("{}:{}: {e}", path.display(), i + 1)))?;
        out.push(record);
    }
    Ok(out)
}

pub fn read_corpus_jsonl(path: &Path) -> Result<Vec<CorpusRecord>> {
    let file = std::fs::File::open(path)
        .map_err(|e| Error::Input(format!("cannot open {}: {e}", path.display())))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let record: CorpusRecord = serde_json::from_str(&line)
            .map_err(|e| Error::Parse(format!("{}:{}: {e}", path.display(), i + 1)))?;
        out.push(record);
    }
    Ok(out)
}

pub fn write_corpus_jsonl(path: &Path, records: &[CorpusRecord]) -> Result<()> {
    let mut file = std::io::BufWriter::new(std::fs::File::create(path)?);
    for r in records {
        let line = serde_json::to_string(r)
            .map_err(|e| Error::Parse(format!("cannot serialize record {}: {e}", r.id)))?;
        writeln!(file, "{line}")?;
    }
    Ok(())
}
