//! Monolingual corpus ingestion and bilingual dictionaries.
//!
//! Raw text comes in one candidate sentence per line. Cleaning lowercases,
//! strips punctuation and splits on whitespace; vocabularies are ordered by
//! descending frequency with a lexicographic tie-break so that word indices
//! are stable across runs.

use std::collections::{HashMap, HashSet};
use std::io::{BufRead, Write};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};

/// A cleaned sentence: non-empty, whitespace-free, lowercased tokens.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Sentence {
    tokens: Vec<String>,
}

impl Sentence {
    /// Builds a sentence from already-clean tokens.
    ///
    /// Returns `None` if any token is empty or contains whitespace.
    pub fn new<S: Into<String>>(tokens: impl IntoIterator<Item = S>) -> Option<Self> {
        let tokens: Vec<String> = tokens.into_iter().map(Into::into).collect();
        if tokens
            .iter()
            .any(|t| t.is_empty() || t.chars().any(char::is_whitespace))
        {
            return None;
        }
        Some(Sentence { tokens })
    }

    /// Splits on whitespace without any further cleaning.
    pub fn from_whitespace(line: &str) -> Self {
        Sentence {
            tokens: line.split_whitespace().map(str::to_owned).collect(),
        }
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    /// The sentence as a single space-separated line.
    pub fn to_line(&self) -> String {
        self.tokens.join(" ")
    }
}

/// Settings for [`clean_corpus`].
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CleanRules {
    pub lowercase: bool,
    pub strip_punctuation: bool,
    /// Drop every sentence already seen earlier in the stream.
    pub dedup: bool,
}

impl Default for CleanRules {
    fn default() -> Self {
        CleanRules {
            lowercase: true,
            strip_punctuation: true,
            dedup: true,
        }
    }
}

const UNICODE_PUNCT: &[char] = &[
    '\u{2018}', '\u{2019}', '\u{201A}', '\u{201B}', '\u{201C}', '\u{201D}', '\u{201E}', '\u{201F}',
    '\u{00AB}', '\u{00BB}', '\u{2039}', '\u{203A}', '\u{2010}', '\u{2011}', '\u{2012}', '\u{2013}',
    '\u{2014}', '\u{2015}', '\u{2026}',
];

fn is_stripped(c: char) -> bool {
    c.is_ascii_punctuation() || UNICODE_PUNCT.contains(&c)
}

/// Cleans a single line into a sentence. Returns `None` when nothing is left.
pub fn clean_line(line: &str, rules: &CleanRules) -> Option<Sentence> {
    let mut text = if rules.lowercase {
        line.to_lowercase()
    } else {
        line.to_owned()
    };
    if rules.strip_punctuation {
        text.retain(|c| !is_stripped(c));
    }
    let sentence = Sentence::from_whitespace(&text);
    if sentence.is_empty() {
        None
    } else {
        Some(sentence)
    }
}

/// Streaming cleaner returned by [`clean_corpus`].
pub struct CleanCorpus<R> {
    reader: R,
    rules: CleanRules,
    line_no: usize,
    seen: HashSet<Sentence>,
    buf: Vec<u8>,
}

impl<R: BufRead> Iterator for CleanCorpus<R> {
    type Item = Result<Sentence>;

    fn next(&mut self) -> Option<Self::Item> {
        loop {
            self.buf.clear();
            match self.reader.read_until(b'\n', &mut self.buf) {
                Ok(0) => return None,
                Ok(_) => {}
                Err(e) => return Some(Err(e.into())),
            }
            self.line_no += 1;
            let line = match std::str::from_utf8(&self.buf) {
                Ok(s) => s,
                Err(_) => return Some(Err(Error::Ingest { line: self.line_no })),
            };
            let Some(sentence) = clean_line(line, &self.rules) else {
                continue;
            };
            if self.rules.dedup && !self.seen.insert(sentence.clone()) {
                continue;
            }
            return Some(Ok(sentence));
        }
    }
}

/// Cleans raw UTF-8 text, one candidate sentence per line.
pub fn clean_corpus<R: BufRead>(reader: R, rules: CleanRules) -> CleanCorpus<R> {
    CleanCorpus {
        reader,
        rules,
        line_no: 0,
        seen: HashSet::new(),
        buf: Vec::new(),
    }
}

/// Reads an already-clean corpus (one whitespace-tokenized sentence per line).
pub fn read_sentences<R: BufRead>(reader: R) -> Result<Vec<Sentence>> {
    let mut out = Vec::new();
    for (i, line) in reader.split(b'\n').enumerate() {
        let line = line?;
        let line = std::str::from_utf8(&line).map_err(|_| Error::Ingest { line: i + 1 })?;
        let sentence = Sentence::from_whitespace(line);
        if !sentence.is_empty() {
            out.push(sentence);
        }
    }
    Ok(out)
}

/// Ordered word list with occurrence counts.
#[derive(Clone, Debug, Default)]
pub struct Vocabulary {
    words: Vec<String>,
    counts: Vec<u64>,
    index: HashMap<String, usize>,
    min_count: u64,
}

impl PartialEq for Vocabulary {
    fn eq(&self, other: &Self) -> bool {
        self.words == other.words && self.counts == other.counts && self.min_count == other.min_count
    }
}

impl Vocabulary {
    /// A vocabulary in the given order with unknown (zero) counts.
    ///
    /// Duplicate words keep their first occurrence; the number of dropped
    /// duplicates is returned alongside.
    pub fn from_words<S: Into<String>>(words: impl IntoIterator<Item = S>) -> (Self, usize) {
        let mut vocab = Vocabulary::default();
        let mut dups = 0;
        for w in words {
            if !vocab.push(w.into(), 0) {
                dups += 1;
            }
        }
        (vocab, dups)
    }

    fn push(&mut self, word: String, count: u64) -> bool {
        if self.index.contains_key(&word) {
            return false;
        }
        self.index.insert(word.clone(), self.words.len());
        self.words.push(word);
        self.counts.push(count);
        true
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn min_count(&self) -> u64 {
        self.min_count
    }

    pub fn index_of(&self, word: &str) -> Option<usize> {
        self.index.get(word).copied()
    }

    pub fn word(&self, idx: usize) -> &str {
        &self.words[idx]
    }

    pub fn count(&self, idx: usize) -> u64 {
        self.counts[idx]
    }

    pub fn contains(&self, word: &str) -> bool {
        self.index.contains_key(word)
    }

    /// Sum of all counts.
    pub fn total_count(&self) -> u64 {
        self.counts.iter().sum()
    }
}

/// Word frequency table; shards built independently merge to the same result.
#[derive(Clone, Debug, Default)]
pub struct WordCounts {
    counts: HashMap<String, u64>,
}

impl WordCounts {
    pub fn add_sentence(&mut self, sentence: &Sentence) {
        for tok in sentence.tokens() {
            *self.counts.entry(tok.clone()).or_insert(0) += 1;
        }
    }

    pub fn merge(mut self, other: WordCounts) -> WordCounts {
        let (mut big, small) = if self.counts.len() >= other.counts.len() {
            (std::mem::take(&mut self.counts), other.counts)
        } else {
            (other.counts, std::mem::take(&mut self.counts))
        };
        for (w, c) in small {
            *big.entry(w).or_insert(0) += c;
        }
        WordCounts { counts: big }
    }

    /// Frequency-descending, lexicographic tie-break.
    pub fn into_vocabulary(self, min_count: u64) -> Vocabulary {
        let mut entries: Vec<(String, u64)> = self
            .counts
            .into_iter()
            .filter(|&(_, c)| c >= min_count)
            .collect();
        entries.sort_unstable_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        let mut vocab = Vocabulary {
            min_count,
            ..Default::default()
        };
        for (w, c) in entries {
            vocab.push(w, c);
        }
        vocab
    }
}

/// Counts words and keeps those seen at least `min_count` times.
pub fn build_vocabulary<'a>(
    sentences: impl IntoIterator<Item = &'a Sentence>,
    min_count: u64,
) -> Result<Vocabulary> {
    if min_count < 1 {
        return Err(Error::argument("min_count must be at least 1"));
    }
    let mut counts = WordCounts::default();
    for s in sentences {
        counts.add_sentence(s);
    }
    Ok(counts.into_vocabulary(min_count))
}

/// Sharded variant of [`build_vocabulary`] using the current rayon pool.
pub fn build_vocabulary_par(sentences: &[Sentence], min_count: u64) -> Result<Vocabulary> {
    if min_count < 1 {
        return Err(Error::argument("min_count must be at least 1"));
    }
    let counts = sentences
        .par_iter()
        .fold(WordCounts::default, |mut acc, s| {
            acc.add_sentence(s);
            acc
        })
        .reduce(WordCounts::default, WordCounts::merge);
    Ok(counts.into_vocabulary(min_count))
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct CorpusStats {
    pub n_sentences: usize,
    pub n_tokens: usize,
    pub n_unique_words: usize,
}

pub fn corpus_stats<'a>(sentences: impl IntoIterator<Item = &'a Sentence>) -> CorpusStats {
    let mut seen: HashSet<&str> = HashSet::new();
    let mut stats = CorpusStats::default();
    for s in sentences {
        stats.n_sentences += 1;
        stats.n_tokens += s.len();
        seen.extend(s.tokens().iter().map(String::as_str));
    }
    stats.n_unique_words = seen.len();
    stats
}

/// Translation pairs (source word, target word), without exact duplicates.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct BilingualLexicon {
    pairs: Vec<(String, String)>,
}

impl BilingualLexicon {
    /// Builds a lexicon, dropping exact duplicates but keeping order.
    pub fn from_pairs<S: Into<String>, T: Into<String>>(
        pairs: impl IntoIterator<Item = (S, T)>,
    ) -> Self {
        let mut seen = HashSet::new();
        let mut out = Vec::new();
        for (s, t) in pairs {
            let pair = (s.into(), t.into());
            if seen.insert(pair.clone()) {
                out.push(pair);
            }
        }
        BilingualLexicon { pairs: out }
    }

    pub fn pairs(&self) -> &[(String, String)] {
        &self.pairs
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    /// Distinct source words in order of first appearance.
    pub fn source_words(&self) -> Vec<&str> {
        let mut seen = HashSet::new();
        self.pairs
            .iter()
            .map(|(s, _)| s.as_str())
            .filter(|s| seen.insert(*s))
            .collect()
    }

    /// Distinct target words in order of first appearance.
    pub fn target_words(&self) -> Vec<&str> {
        let mut seen = HashSet::new();
        self.pairs
            .iter()
            .map(|(_, t)| t.as_str())
            .filter(|t| seen.insert(*t))
            .collect()
    }

    /// Source words mapped to all their reference targets, in first-appearance order.
    pub fn grouped(&self) -> Vec<(&str, Vec<&str>)> {
        let mut order: Vec<(&str, Vec<&str>)> = Vec::new();
        let mut pos: HashMap<&str, usize> = HashMap::new();
        for (s, t) in &self.pairs {
            match pos.get(s.as_str()) {
                Some(&i) => order[i].1.push(t),
                None => {
                    pos.insert(s, order.len());
                    order.push((s, vec![t]));
                }
            }
        }
        order
    }
}

/// Parses "src<TAB>tgt" lines (a single space separates when no tab is present).
pub fn load_lexicon<R: BufRead>(reader: R) -> Result<BilingualLexicon> {
    let mut pairs = Vec::new();
    for (i, line) in reader.split(b'\n').enumerate() {
        let line_no = i + 1;
        let line = line?;
        let line = std::str::from_utf8(&line).map_err(|_| Error::Ingest { line: line_no })?;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = if line.contains('\t') {
            line.split('\t').map(str::trim).collect()
        } else {
            line.split_whitespace().collect()
        };
        if fields.len() != 2 || fields.iter().any(|f| f.is_empty()) {
            return Err(Error::Parse {
                line: line_no,
                msg: format!("expected 2 fields, found {}", fields.len()),
            });
        }
        pairs.push((fields[0].to_lowercase(), fields[1].to_lowercase()));
    }
    Ok(BilingualLexicon::from_pairs(pairs))
}

pub fn write_lexicon<W: Write>(lex: &BilingualLexicon, mut writer: W) -> Result<()> {
    for (s, t) in lex.pairs() {
        if s.contains(['\t', '\n']) || t.contains(['\t', '\n']) {
            return Err(Error::Encoding(format!("pair ({s}, {t}) contains a tab or newline")));
        }
        writeln!(writer, "{s}\t{t}")?;
    }
    writer.flush()?;
    Ok(())
}

/// Keeps the pairs covered by both vocabularies; also returns how many were dropped.
pub fn filter_lexicon(
    lex: &BilingualLexicon,
    src_vocab: &Vocabulary,
    tgt_vocab: &Vocabulary,
) -> (BilingualLexicon, usize) {
    let pairs: Vec<(String, String)> = lex
        .pairs
        .iter()
        .filter(|(s, t)| src_vocab.contains(s) && tgt_vocab.contains(t))
        .cloned()
        .collect();
    let dropped = lex.len() - pairs.len();
    (BilingualLexicon { pairs }, dropped)
}

/// Splits off roughly `n_val` pairs for validation, keeping all pairs of a
/// source word on the same side.
pub fn split_lexicon(
    lex: &BilingualLexicon,
    n_val: usize,
    seed: u64,
) -> Result<(BilingualLexicon, BilingualLexicon)> {
    if n_val == 0 || n_val >= lex.len() {
        return Err(Error::argument(format!(
            "n_val must be in 1..{}, got {n_val}",
            lex.len()
        )));
    }
    let mut groups: Vec<Vec<usize>> = Vec::new();
    let mut pos: HashMap<&str, usize> = HashMap::new();
    for (i, (s, _)) in lex.pairs.iter().enumerate() {
        let g = *pos.entry(s.as_str()).or_insert_with(|| {
            groups.push(Vec::new());
            groups.len() - 1
        });
        groups[g].push(i);
    }
    if groups.len() < 2 {
        return Err(Error::argument(
            "lexicon has a single source word; cannot split without leakage",
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    groups.shuffle(&mut rng);

    let mut in_val = vec![false; lex.len()];
    let mut n_taken = 0;
    let mut last_group = 0;
    for (gi, g) in groups.iter().enumerate() {
        if n_taken >= n_val {
            break;
        }
        for &i in g {
            in_val[i] = true;
        }
        n_taken += g.len();
        last_group = gi;
    }
    if n_taken == lex.len() {
        for &i in &groups[last_group] {
            in_val[i] = false;
        }
    }
    let (val, train): (Vec<_>, Vec<_>) = lex
        .pairs
        .iter()
        .cloned()
        .enumerate()
        .partition(|(i, _)| in_val[*i]);
    let strip = |v: Vec<(usize, (String, String))>| BilingualLexicon {
        pairs: v.into_iter().map(|(_, p)| p).collect(),
    };
    Ok((strip(train), strip(val)))
}
