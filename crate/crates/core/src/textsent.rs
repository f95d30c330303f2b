//! Opinion-channel text processing: dictionary segmentation, a multinomial
//! naive Bayes sentiment scorer, and word-frequency reports.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::io::{BufRead, Write};

use serde::Serialize;
use sha2::{Digest, Sha256};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum TextError {
    #[error("lexicon is empty")]
    EmptyLexicon,
    #[error("lexicon line {line}: {detail}")]
    LexiconLine { line: usize, detail: String },
    #[error("{0} training corpus is empty")]
    EmptyCorpus(&'static str),
    #[error("smoothing alpha must be positive and finite, got {0}")]
    InvalidAlpha(f64),
    #[error("k must be at least 1")]
    InvalidTopK,
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

/// Splits text into tokens that concatenate back to the input (modulo the
/// whitespace splitter, which drops separators).
pub trait Tokenizer: Sync {
    fn tokenize<'a>(&self, text: &'a str) -> Vec<&'a str>;
}

/// Splits on Unicode whitespace.
#[derive(Debug, Clone, Copy, Default)]
pub struct WhitespaceTokenizer;

impl Tokenizer for WhitespaceTokenizer {
    fn tokenize<'a>(&self, text: &'a str) -> Vec<&'a str> {
        text.split_whitespace().collect()
    }
}

/// Word → frequency count dictionary for segmentation.
#[derive(Debug, Clone, PartialEq)]
pub struct Lexicon {
    entries: HashMap<String, u64>,
    total: u64,
    max_word_chars: usize,
    ln_total: f64,
}

impl Lexicon {
    pub fn new<I, S>(entries: I) -> Result<Self, TextError>
    where
        I: IntoIterator<Item = (S, u64)>,
        S: Into<String>,
    {
        let mut map = HashMap::new();
        for (word, count) in entries {
            let word = word.into();
            if word.is_empty() || count == 0 {
                return Err(TextError::LexiconLine {
                    line: 0,
                    detail: format!("invalid entry {word:?} with count {count}"),
                });
            }
            *map.entry(word).or_insert(0) += count;
        }
        if map.is_empty() {
            return Err(TextError::EmptyLexicon);
        }
        let total = map.values().sum::<u64>();
        let max_word_chars = map.keys().map(|w| w.chars().count()).max().unwrap_or(1);
        Ok(Self {
            entries: map,
            total,
            max_word_chars,
            ln_total: (total as f64).ln(),
        })
    }

    /// Read `word<TAB>count` lines. Blank lines are skipped.
    pub fn from_reader<R: BufRead>(reader: R) -> Result<Self, TextError> {
        let mut entries = Vec::new();
        for (i, line) in reader.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let bad = |detail: &str| TextError::LexiconLine {
                line: i + 1,
                detail: detail.to_string(),
            };
            let (word, count) = line.split_once('\t').ok_or_else(|| bad("expected word<TAB>count"))?;
            let count: u64 = count.trim().parse().map_err(|_| bad("count is not a positive integer"))?;
            if word.is_empty() || count == 0 {
                return Err(bad("empty word or zero count"));
            }
            entries.push((word.to_string(), count));
        }
        Self::new(entries)
    }

    pub fn freq(&self, word: &str) -> Option<u64> {
        self.entries.get(word).copied()
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Entries sorted by word, for writing out.
    pub fn sorted_entries(&self) -> Vec<(&str, u64)> {
        let mut v: Vec<(&str, u64)> = self.entries.iter().map(|(w, c)| (w.as_str(), *c)).collect();
        v.sort();
        v
    }

    pub fn write_to<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        for (word, count) in self.sorted_entries() {
            writeln!(out, "{word}\t{count}")?;
        }
        Ok(())
    }

    fn log_prob(&self, freq: u64) -> f64 {
        (freq as f64).ln() - self.ln_total
    }
}

impl Tokenizer for Lexicon {
    fn tokenize<'a>(&self, text: &'a str) -> Vec<&'a str> {
        tokenize(text, self)
    }
}

const TIE_EPS: f64 = 1e-9;

/// Maximum-probability segmentation over the dictionary match graph.
///
/// Every lexicon word occurring in `text` is an edge; a position where no
/// word starts gets a single-character edge with frequency 1. The route
/// maximizing `Σ ln(freq / total)` is found right to left. When two routes
/// score equally the one with the longer first token wins, recursively.
pub fn tokenize<'a>(text: &'a str, lex: &Lexicon) -> Vec<&'a str> {
    let bounds: Vec<usize> = text
        .char_indices()
        .map(|(i, _)| i)
        .chain(std::iter::once(text.len()))
        .collect();
    let n = bounds.len() - 1;
    if n == 0 {
        return Vec::new();
    }

    // best[i] = (score of best route from char i to the end, end of first token)
    let mut best = vec![(0.0f64, n); n + 1];
    for i in (0..n).rev() {
        let limit = lex.max_word_chars.min(n - i);
        let mut edges: Vec<(f64, usize)> = (1..=limit)
            .filter_map(|len| {
                let j = i + len;
                lex.freq(&text[bounds[i]..bounds[j]])
                    .map(|freq| (lex.log_prob(freq) + best[j].0, j))
            })
            .collect();
        if edges.is_empty() {
            edges.push((lex.log_prob(1) + best[i + 1].0, i + 1));
        }
        // edges ascend in j, so a later tie means a longer first token
        let mut chosen = edges[0];
        for &(score, j) in &edges[1..] {
            let tol = TIE_EPS * (1.0 + chosen.0.abs());
            if score > chosen.0 + tol {
                chosen = (score, j);
            } else if score >= chosen.0 - tol {
                chosen = (chosen.0.max(score), j);
            }
        }
        best[i] = chosen;
    }

    let mut tokens = Vec::new();
    let mut i = 0;
    while i < n {
        let j = best[i].1;
        tokens.push(&text[bounds[i]..bounds[j]]);
        i = j;
    }
    tokens
}

/// Multinomial naive Bayes with additive smoothing over two classes.
#[derive(Debug, Clone, PartialEq)]
pub struct SentimentModel {
    pos_docs: u64,
    neg_docs: u64,
    pos_counts: BTreeMap<String, u64>,
    neg_counts: BTreeMap<String, u64>,
    pos_total: u64,
    neg_total: u64,
    vocab_size: usize,
    alpha: f64,
}

fn count_tokens<T: Tokenizer + ?Sized, S: AsRef<str>>(
    docs: &[S],
    tok: &T,
) -> BTreeMap<String, u64> {
    let mut counts = BTreeMap::new();
    for doc in docs {
        for t in tok.tokenize(doc.as_ref()) {
            *counts.entry(t.to_string()).or_insert(0) += 1;
        }
    }
    counts
}

impl SentimentModel {
    pub fn train<T, S>(pos_docs: &[S], neg_docs: &[S], alpha: f64, tok: &T) -> Result<Self, TextError>
    where
        T: Tokenizer + ?Sized,
        S: AsRef<str>,
    {
        if pos_docs.is_empty() {
            return Err(TextError::EmptyCorpus("positive"));
        }
        if neg_docs.is_empty() {
            return Err(TextError::EmptyCorpus("negative"));
        }
        if !(alpha > 0.0 && alpha.is_finite()) {
            return Err(TextError::InvalidAlpha(alpha));
        }
        let pos_counts = count_tokens(pos_docs, tok);
        let neg_counts = count_tokens(neg_docs, tok);
        let vocab: BTreeSet<&String> = pos_counts.keys().chain(neg_counts.keys()).collect();
        let vocab_size = vocab.len().max(1);
        Ok(Self {
            pos_docs: pos_docs.len() as u64,
            neg_docs: neg_docs.len() as u64,
            pos_total: pos_counts.values().sum(),
            neg_total: neg_counts.values().sum(),
            pos_counts,
            neg_counts,
            vocab_size,
            alpha,
        })
    }

    pub fn prior_pos(&self) -> f64 {
        self.pos_docs as f64 / (self.pos_docs + self.neg_docs) as f64
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab_size
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    /// Smoothed `P(token | positive)`.
    pub fn p_token_pos(&self, token: &str) -> f64 {
        self.smoothed(self.pos_counts.get(token).copied().unwrap_or(0), self.pos_total)
    }

    /// Smoothed `P(token | negative)`.
    pub fn p_token_neg(&self, token: &str) -> f64 {
        self.smoothed(self.neg_counts.get(token).copied().unwrap_or(0), self.neg_total)
    }

    fn smoothed(&self, count: u64, class_total: u64) -> f64 {
        (count as f64 + self.alpha) / (class_total as f64 + self.alpha * self.vocab_size as f64)
    }

    /// The same model with the class labels exchanged.
    pub fn swapped(&self) -> Self {
        Self {
            pos_docs: self.neg_docs,
            neg_docs: self.pos_docs,
            pos_counts: self.neg_counts.clone(),
            neg_counts: self.pos_counts.clone(),
            pos_total: self.neg_total,
            neg_total: self.pos_total,
            vocab_size: self.vocab_size,
            alpha: self.alpha,
        }
    }

    /// `P(positive | tokens)`. Token order is irrelevant: log terms are summed
    /// per distinct token in sorted order. No tokens → the positive prior.
    pub fn score_tokens(&self, tokens: &[&str]) -> f64 {
        let mut bag: BTreeMap<&str, u64> = BTreeMap::new();
        for t in tokens {
            *bag.entry(t).or_insert(0) += 1;
        }
        // log odds of negative over positive
        let mut log_odds = (self.neg_docs as f64).ln() - (self.pos_docs as f64).ln();
        for (token, count) in bag {
            let term = self.p_token_neg(token).ln() - self.p_token_pos(token).ln();
            log_odds += count as f64 * term;
        }
        if log_odds > 0.0 {
            let e = (-log_odds).exp();
            e / (1.0 + e)
        } else {
            1.0 / (1.0 + log_odds.exp())
        }
    }

    pub fn score_text<T: Tokenizer + ?Sized>(&self, text: &str, tok: &T) -> f64 {
        self.score_tokens(&tok.tokenize(text))
    }
}

/// Stopword list with a short content digest used as its identifier.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StopwordSet {
    words: BTreeSet<String>,
}

const DEFAULT_STOPWORDS: &str = include_str!("stopwords.txt");

impl StopwordSet {
    pub fn new<I: IntoIterator<Item = S>, S: Into<String>>(words: I) -> Self {
        Self {
            words: words.into_iter().map(Into::into).filter(|w: &String| !w.is_empty()).collect(),
        }
    }

    /// One word per line; surrounding whitespace is trimmed.
    pub fn from_reader<R: BufRead>(reader: R) -> Result<Self, TextError> {
        let mut words = Vec::new();
        for line in reader.lines() {
            let line = line?;
            let w = line.trim();
            if !w.is_empty() {
                words.push(w.to_string());
            }
        }
        Ok(Self::new(words))
    }

    /// Punctuation plus a short list of Chinese and English function words.
    pub fn default_set() -> Self {
        Self::from_reader(DEFAULT_STOPWORDS.as_bytes()).expect("bundled list is valid UTF-8")
    }

    pub fn contains(&self, word: &str) -> bool {
        self.words.contains(word)
    }

    pub fn id(&self) -> String {
        let mut h = Sha256::new();
        for w in &self.words {
            h.update(w.as_bytes());
            h.update(b"\n");
        }
        hex::encode(&h.finalize()[..8])
    }
}

fn is_punctuation(c: char) -> bool {
    c.is_ascii_punctuation()
        || matches!(c as u32,
            0x00A1..=0x00BF
            | 0x2000..=0x206F
            | 0x3000..=0x303F
            | 0xFE30..=0xFE4F
            | 0xFF01..=0xFF0F
            | 0xFF1A..=0xFF20
            | 0xFF3B..=0xFF40
            | 0xFF5B..=0xFF65)
}

fn is_noise_token(token: &str) -> bool {
    token.chars().all(|c| c.is_whitespace() || is_punctuation(c))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WordFrequencyReport {
    pub entries: Vec<(String, u64)>,
    pub documents: usize,
    pub tokens_counted: u64,
    pub stopword_set_id: String,
}

impl WordFrequencyReport {
    /// CSV `rank,token,count`, rank starting at 1.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), TextError> {
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(out);
        w.write_record(["rank", "token", "count"])?;
        for (rank, (token, count)) in self.entries.iter().enumerate() {
            w.write_record([(rank + 1).to_string(), token.clone(), count.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Top-`k` tokens by count, ties broken by ascending code point order.
pub fn word_frequency<T, S>(
    docs: &[S],
    stopwords: &StopwordSet,
    k: usize,
    tok: &T,
) -> Result<WordFrequencyReport, TextError>
where
    T: Tokenizer + ?Sized,
    S: AsRef<str>,
{
    if k == 0 {
        return Err(TextError::InvalidTopK);
    }
    let mut counts: BTreeMap<&str, u64> = BTreeMap::new();
    let mut tokens_counted = 0;
    for doc in docs {
        for t in tok.tokenize(doc.as_ref()) {
            if is_noise_token(t) || stopwords.contains(t) {
                continue;
            }
            *counts.entry(t).or_insert(0) += 1;
            tokens_counted += 1;
        }
    }
    let mut ranked: Vec<(String, u64)> = counts.into_iter().map(|(t, c)| (t.to_string(), c)).collect();
    // BTreeMap order is already ascending by token; a stable sort keeps it within ties.
    ranked.sort_by_key(|r| std::cmp::Reverse(r.1));
    ranked.truncate(k);
    Ok(WordFrequencyReport {
        entries: ranked,
        documents: docs.len(),
        tokens_counted,
        stopword_set_id: stopwords.id(),
    })
}
