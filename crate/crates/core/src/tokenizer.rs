//! Corpus-trained subword vocabulary and fixed-length sequence encoding.
//!
//! Encoding follows the `[CLS] pieces… [SEP] [PAD]…` layout. Word pieces are
//! found by greedy longest match; continuations carry the `##` marker. Each
//! piece remembers which source word produced it so attention scores can be
//! folded back to words.

use std::collections::HashMap;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use crate::{Error, Result};

pub const PAD_ID: usize = 0;
pub const UNK_ID: usize = 1;
pub const CLS_ID: usize = 2;
pub const SEP_ID: usize = 3;

pub const SPECIALS: [&str; 4] = ["[PAD]", "[UNK]", "[CLS]", "[SEP]"];
const CONTINUATION: &str = "##";

/// Immutable subword vocabulary with fixed special ids.
#[derive(Debug, Clone)]
pub struct Vocab {
    pieces: Vec<String>,
    lookup: HashMap<String, usize>,
}

impl Vocab {
    fn from_pieces(pieces: Vec<String>) -> Result<Self> {
        if pieces.len() < SPECIALS.len()
            || SPECIALS.iter().zip(&pieces).any(|(s, p)| s != p)
        {
            return Err(Error::Config(
                "vocabulary must start with [PAD] [UNK] [CLS] [SEP]".into(),
            ));
        }
        let mut lookup = HashMap::with_capacity(pieces.len());
        for (i, p) in pieces.iter().enumerate() {
            if lookup.insert(p.clone(), i).is_some() {
                return Err(Error::Config(format!("duplicate vocabulary piece '{p}'")));
            }
        }
        Ok(Vocab { pieces, lookup })
    }

    pub fn len(&self) -> usize {
        self.pieces.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pieces.is_empty()
    }

    pub fn id_of(&self, piece: &str) -> Option<usize> {
        self.lookup.get(piece).copied()
    }

    pub fn piece(&self, id: usize) -> Option<&str> {
        self.pieces.get(id).map(|s| s.as_str())
    }

    /// One piece per line; the line number is the id.
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut file = std::io::BufWriter::new(std::fs::File::create(path)?);
        for p in &self.pieces {
            writeln!(file, "{p}")?;
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path)
            .map_err(|e| Error::Input(format!("cannot open vocabulary {}: {e}", path.display())))?;
        let pieces: Vec<String> =
            BufReader::new(file).lines().collect::<std::io::Result<_>>()?;
        Vocab::from_pieces(pieces)
    }
}

/// Greedy frequency vocabulary: specials, all single characters (word-initial
/// and continuation forms), then whole words, until `target_size` pieces.
/// Ordering is by descending frequency with lexicographic tie-break, so the
/// result is deterministic for a fixed corpus.
pub fn build_vocab<S: AsRef<str>>(corpus: &[S], target_size: usize) -> Result<Vocab> {
    if target_size <= SPECIALS.len() {
        return Err(Error::Config(format!(
            "vocabulary size {target_size} leaves no room beyond the {} specials",
            SPECIALS.len()
        )));
    }
    if corpus.is_empty() || corpus.iter().all(|t| t.as_ref().split_whitespace().count() == 0) {
        return Err(Error::Input("cannot build a vocabulary from an empty corpus".into()));
    }

    let mut char_freq: HashMap<char, u64> = HashMap::new();
    let mut word_freq: HashMap<String, u64> = HashMap::new();
    for text in corpus {
        for word in text.as_ref().split_whitespace() {
            *word_freq.entry(word.to_string()).or_insert(0) += 1;
            for ch in word.chars() {
                *char_freq.entry(ch).or_insert(0) += 1;
            }
        }
    }

    let mut pieces: Vec<String> = SPECIALS.iter().map(|s| s.to_string()).collect();

    let mut chars: Vec<(char, u64)> = char_freq.into_iter().collect();
    chars.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    for (ch, _) in chars {
        if pieces.len() >= target_size {
            break;
        }
        pieces.push(ch.to_string());
        if pieces.len() < target_size {
            pieces.push(format!("{CONTINUATION}{ch}"));
        }
    }

    let mut words: Vec<(String, u64)> = word_freq.into_iter().collect();
    words.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    for (word, _) in words {
        if pieces.len() >= target_size {
            break;
        }
        if word.chars().count() > 1 && !pieces.contains(&word) {
            pieces.push(word);
        }
    }

    Vocab::from_pieces(pieces)
}

/// A fixed-length encoded sequence with word alignment.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenSequence {
    pub ids: Vec<usize>,
    /// 1 for real tokens including `[CLS]`/`[SEP]`, 0 for padding.
    pub mask: Vec<u8>,
    /// Source-word index per position; `None` for specials and padding.
    pub word_index: Vec<Option<usize>>,
    /// The source words, whitespace-split, after truncation.
    pub words: Vec<String>,
}

impl TokenSequence {
    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn attention_mask(&self) -> Vec<bool> {
        self.mask.iter().map(|&m| m == 1).collect()
    }

    /// Position of the single `[SEP]` token.
    pub fn sep_position(&self) -> usize {
        self.ids.iter().position(|&id| id == SEP_ID).expect("encoded sequences carry [SEP]")
    }
}

/// Greedy longest-match pieces of one word, or `None` if any remainder has
/// no matching piece (the whole word then becomes `[UNK]`).
fn word_pieces(word: &str, vocab: &Vocab) -> Option<Vec<usize>> {
    let chars: Vec<char> = word.chars().collect();
    let mut pieces = Vec::new();
    let mut start = 0;
    while start < chars.len() {
        let mut matched = None;
        for end in (start + 1..=chars.len()).rev() {
            let span: String = chars[start..end].iter().collect();
            let candidate =
                if start == 0 { span } else { format!("{CONTINUATION}{span}") };
            if let Some(id) = vocab.id_of(&candidate) {
                matched = Some((id, end));
                break;
            }
        }
        match matched {
            Some((id, end)) => {
                pieces.push(id);
                start = end;
            }
            None => return None,
        }
    }
    Some(pieces)
}

/// Encode text to exactly `n` positions. Words whose pieces would overflow
/// the `n − 2` content budget are dropped whole from the tail.
pub fn encode(text: &str, vocab: &Vocab, n: usize) -> Result<TokenSequence> {
    if n < 3 {
        return Err(Error::Config(format!(
            "sequence length {n} cannot hold [CLS] and [SEP]"
        )));
    }
    let budget = n - 2;
    let mut ids = vec![CLS_ID];
    let mut word_index: Vec<Option<usize>> = vec![None];
    let mut words = Vec::new();

    for (w, word) in text.split_whitespace().enumerate() {
        let pieces = word_pieces(word, vocab).unwrap_or_else(|| vec![UNK_ID]);
        if ids.len() - 1 + pieces.len() > budget {
            break;
        }
        for id in pieces {
            ids.push(id);
            word_index.push(Some(w));
        }
        words.push(word.to_string());
    }

    ids.push(SEP_ID);
    word_index.push(None);
    let mut mask = vec![1u8; ids.len()];
    while ids.len() < n {
        ids.push(PAD_ID);
        word_index.push(None);
        mask.push(0);
    }
    Ok(TokenSequence { ids, mask, word_index, words })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn vocab_of(extra: &[&str]) -> Vocab {
        let mut pieces: Vec<String> = SPECIALS.iter().map(|s| s.to_string()).collect();
        pieces.extend(extra.iter().map(|s| s.to_string()));
        Vocab::from_pieces(pieces).unwrap()
    }

    #[test]
    fn build_vocab_ranks_by_frequency() {
        let vocab = build_vocab(&["a a b"], 7).unwrap();
        // 4 specials + 3 budgeted pieces: a, ##a, b.
        assert_eq!(vocab.len(), 7);
        assert_eq!(vocab.piece(4), Some("a"));
        assert_eq!(vocab.piece(5), Some("##a"));
        assert_eq!(vocab.piece(6), Some("b"));
    }

    #[test]
    fn build_vocab_minimal_budget() {
        let vocab = build_vocab(&["a a b"], 5).unwrap();
        assert_eq!(vocab.len(), 5);
        assert_eq!(vocab.piece(4), Some("a"));
    }

    #[test]
    fn build_vocab_is_deterministic() {
        let corpus = ["hello world world", "hello again"];
        let a = build_vocab(&corpus, 40).unwrap();
        let b = build_vocab(&corpus, 40).unwrap();
        let pa: Vec<_> = (0..a.len()).map(|i| a.piece(i).unwrap().to_string()).collect();
        let pb: Vec<_> = (0..b.len()).map(|i| b.piece(i).unwrap().to_string()).collect();
        assert_eq!(pa, pb);
    }

    #[test]
    fn build_vocab_rejects_empty_or_tiny() {
        assert!(matches!(build_vocab::<&str>(&[], 10), Err(Error::Input(_))));
        assert!(matches!(build_vocab(&["  "], 10), Err(Error::Input(_))));
        assert!(matches!(build_vocab(&["a"], 4), Err(Error::Config(_))));
    }

    #[test]
    fn encode_fixed_layout() {
        let vocab = vocab_of(&["hi"]);
        let seq = encode("hi", &vocab, 6).unwrap();
        assert_eq!(seq.ids, vec![CLS_ID, 4, SEP_ID, PAD_ID, PAD_ID, PAD_ID]);
        assert_eq!(seq.mask, vec![1, 1, 1, 0, 0, 0]);
        assert_eq!(seq.word_index, vec![None, Some(0), None, None, None, None]);
        assert_eq!(seq.words, vec!["hi"]);
    }

    #[test]
    fn encode_unknown_word_is_single_unk() {
        let vocab = vocab_of(&["hi"]);
        let seq = encode("xyz", &vocab, 5).unwrap();
        assert_eq!(seq.ids, vec![CLS_ID, UNK_ID, SEP_ID, PAD_ID, PAD_ID]);
    }

    #[test]
    fn encode_greedy_longest_match() {
        let vocab = vocab_of(&["a", "aa", "##a", "##aa"]);
        let seq = encode("aaa", &vocab, 8).unwrap();
        // Greedy picks "aa" first, then the continuation "##a".
        assert_eq!(seq.ids[1], vocab.id_of("aa").unwrap());
        assert_eq!(seq.ids[2], vocab.id_of("##a").unwrap());
        assert_eq!(seq.ids[3], SEP_ID);
        assert_eq!(seq.word_index[1], Some(0));
        assert_eq!(seq.word_index[2], Some(0));
    }

    #[test]
    fn encode_truncates_whole_words() {
        let vocab = vocab_of(&["ab", "cd", "ef"]);
        // budget = 2 content pieces; the third word no longer fits.
        let seq = encode("ab cd ef", &vocab, 4).unwrap();
        assert_eq!(seq.words, vec!["ab", "cd"]);
        assert_eq!(seq.ids[3], SEP_ID);
        let mask_count: usize = seq.mask.iter().map(|&m| m as usize).sum();
        assert_eq!(mask_count, 2 + 2);
    }

    #[test]
    fn encode_rejects_tiny_n() {
        let vocab = vocab_of(&[]);
        assert!(matches!(encode("x", &vocab, 2), Err(Error::Config(_))));
    }

    #[test]
    fn word_index_is_non_decreasing_and_deterministic() {
        let corpus = ["the quick brown fox jumps over the lazy dog again and again"];
        let vocab = build_vocab(&corpus, 64).unwrap();
        let a = encode(corpus[0], &vocab, 32).unwrap();
        let b = encode(corpus[0], &vocab, 32).unwrap();
        assert_eq!(a, b);
        let mut last = 0usize;
        for wi in a.word_index.iter().flatten() {
            assert!(*wi >= last);
            last = *wi;
        }
        let pieces = a.word_index.iter().flatten().count();
        let mask_count: usize = a.mask.iter().map(|&m| m as usize).sum();
        assert_eq!(mask_count, pieces + 2);
        assert_eq!(a.sep_position(), pieces + 1);
    }

    #[test]
    fn vocab_save_load_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("vocab.txt");
        let vocab = build_vocab(&["some words some pieces"], 30).unwrap();
        vocab.save(&path).unwrap();
        let loaded = Vocab::load(&path).unwrap();
        assert_eq!(loaded.len(), vocab.len());
        for i in 0..vocab.len() {
            assert_eq!(vocab.piece(i), loaded.piece(i));
        }
    }
}
