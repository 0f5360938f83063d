//! Raw text ingestion, normalization, lexicon filtering and parallel
//! viseme/character corpus construction.

use std::collections::HashMap;
use std::fmt;
use std::io::{BufRead, Write};
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::lexicon::{Lexicon, LexiconError, VisemeMapping};

/// Bumped whenever [`normalize_sentence`] changes behaviour.
pub const NORMALIZATION_VERSION: &str = "1";

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("sentence {index} cannot be converted: {source}")]
    Contract { index: usize, source: LexiconError },
    #[error("sentence {0} has an empty viseme sequence")]
    EmptyVisemes(usize),
    #[error("invalid split ratios {0:?}: must be non-negative and sum to 1")]
    Ratios([f64; 3]),
    #[error("example {0} has no split label")]
    Unsplit(usize),
    #[error("line {line}: {message}")]
    Format { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Uppercases, turns punctuation other than the apostrophe into spaces and
/// collapses whitespace. Returns `None` for empty results, digits, or any
/// letter outside A-Z.
pub fn normalize_sentence(raw: &str) -> Option<String> {
    let mut out = String::with_capacity(raw.len());
    let mut pending_space = false;
    for c in raw.chars() {
        let c = match c {
            '\u{2018}' | '\u{2019}' => '\'',
            c => c,
        };
        if c.is_numeric() {
            return None;
        }
        if c.is_alphabetic() || c == '\'' {
            let upper = c.to_ascii_uppercase();
            if !(upper.is_ascii_uppercase() || upper == '\'') {
                return None;
            }
            if pending_space && !out.is_empty() {
                out.push(' ');
            }
            pending_space = false;
            out.push(upper);
        } else {
            pending_space = true;
        }
    }
    (!out.is_empty()).then_some(out)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Provenance {
    pub source: String,
    pub normalization_version: String,
}

/// Normalized sentences in input order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TextCorpus {
    pub sentences: Vec<String>,
    pub provenance: Provenance,
}

impl TextCorpus {
    /// Wraps sentences that are already normalized.
    pub fn new(sentences: Vec<String>, source: impl Into<String>) -> TextCorpus {
        debug_assert!(sentences.iter().all(|s| normalize_sentence(s).as_deref() == Some(s.as_str())));
        TextCorpus {
            sentences,
            provenance: Provenance {
                source: source.into(),
                normalization_version: NORMALIZATION_VERSION.to_string(),
            },
        }
    }

    /// Reads one sentence per line, normalizing each. Returns the corpus and
    /// the number of rejected lines (blank lines are not counted).
    pub fn read_normalized<R: BufRead>(
        reader: R,
        source: impl Into<String>,
    ) -> Result<(TextCorpus, usize), CorpusError> {
        let mut sentences = Vec::new();
        let mut rejected = 0;
        for line in reader.lines() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            match normalize_sentence(&line) {
                Some(s) => sentences.push(s),
                None => rejected += 1,
            }
        }
        Ok((TextCorpus::new(sentences, source), rejected))
    }

    pub fn len(&self) -> usize {
        self.sentences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sentences.is_empty()
    }

    /// Keeps sentences whose every word is in the lexicon, in order.
    pub fn filter_by_lexicon(&self, lexicon: &Lexicon) -> (TextCorpus, usize) {
        let kept: Vec<String> = self
            .sentences
            .iter()
            .filter(|s| covered_by(lexicon, s))
            .cloned()
            .collect();
        let dropped = self.sentences.len() - kept.len();
        (TextCorpus { sentences: kept, provenance: self.provenance.clone() }, dropped)
    }
}

pub fn covered_by(lexicon: &Lexicon, sentence: &str) -> bool {
    sentence.split(' ').all(|w| lexicon.contains(w))
}

/// Token counts over a corpus.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct VocabStats {
    counts: HashMap<String, u64>,
    total_tokens: u64,
}

impl VocabStats {
    pub fn from_corpus(corpus: &TextCorpus) -> VocabStats {
        let mut stats = VocabStats::default();
        for s in &corpus.sentences {
            stats.add_sentence(s);
        }
        stats
    }

    pub fn add_sentence(&mut self, sentence: &str) {
        for word in sentence.split(' ').filter(|w| !w.is_empty()) {
            *self.counts.entry(word.to_string()).or_default() += 1;
            self.total_tokens += 1;
        }
    }

    /// Builds stats directly from (word, count) pairs; zero counts are kept.
    pub fn from_counts<I, S>(counts: I) -> VocabStats
    where
        I: IntoIterator<Item = (S, u64)>,
        S: Into<String>,
    {
        let mut stats = VocabStats::default();
        for (w, c) in counts {
            *stats.counts.entry(w.into()).or_default() += c;
            stats.total_tokens += c;
        }
        stats
    }

    pub fn count(&self, word: &str) -> u64 {
        self.counts.get(word).copied().unwrap_or(0)
    }

    pub fn total_tokens(&self) -> u64 {
        self.total_tokens
    }

    pub fn num_types(&self) -> usize {
        self.counts.len()
    }

    /// (word, count) sorted by descending count, then word.
    pub fn sorted(&self) -> Vec<(&str, u64)> {
        let mut v: Vec<(&str, u64)> = self.counts.iter().map(|(w, &c)| (w.as_str(), c)).collect();
        v.sort_unstable_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(b.0)));
        v
    }

    pub fn write_tsv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        for (w, c) in self.sorted() {
            writeln!(out, "{w}\t{c}")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Split {
    Train,
    Valid,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Valid, Split::Test];

    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Valid => "valid",
            Split::Test => "test",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Split {
    type Err = String;

    fn from_str(s: &str) -> Result<Split, String> {
        match s {
            "train" => Ok(Split::Train),
            "valid" => Ok(Split::Valid),
            "test" => Ok(Split::Test),
            other => Err(format!("unknown split label {other:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParallelExample {
    pub visemes: Vec<String>,
    pub text: String,
    pub split: Option<Split>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ParallelCorpus {
    pub examples: Vec<ParallelExample>,
}

impl ParallelCorpus {
    /// One unsplit example per sentence. The corpus must already be
    /// lexicon-filtered; an OOV word is a contract violation.
    pub fn build(
        corpus: &TextCorpus,
        lexicon: &Lexicon,
        mapping: &VisemeMapping,
        boundaries: bool,
    ) -> Result<ParallelCorpus, CorpusError> {
        let examples = corpus
            .sentences
            .iter()
            .enumerate()
            .map(|(index, s)| {
                let visemes = lexicon
                    .sentence_to_visemes(mapping, s, boundaries)
                    .map_err(|source| CorpusError::Contract { index, source })?;
                if visemes.is_empty() {
                    return Err(CorpusError::EmptyVisemes(index));
                }
                Ok(ParallelExample { visemes, text: s.clone(), split: None })
            })
            .collect::<Result<_, _>>()?;
        Ok(ParallelCorpus { examples })
    }

    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    /// Seeded shuffle, then contiguous train/valid/test assignment with
    /// sizes from largest-remainder rounding of `ratios`.
    pub fn split(&self, ratios: [f64; 3], seed: u64) -> Result<ParallelCorpus, CorpusError> {
        let sizes = split_sizes(self.examples.len(), ratios)?;
        let mut order: Vec<usize> = (0..self.examples.len()).collect();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let labels = Split::ALL
            .iter()
            .zip(sizes)
            .flat_map(|(&s, n)| std::iter::repeat(s).take(n));
        let examples = order
            .into_iter()
            .zip(labels)
            .map(|(i, label)| ParallelExample { split: Some(label), ..self.examples[i].clone() })
            .collect();
        Ok(ParallelCorpus { examples })
    }

    pub fn subset(&self, split: Split) -> Vec<&ParallelExample> {
        self.examples.iter().filter(|e| e.split == Some(split)).collect()
    }

    /// `visemes<TAB>text<TAB>split` per line. Every example must be split.
    pub fn write_tsv<W: Write>(&self, mut out: W) -> Result<(), CorpusError> {
        for (i, e) in self.examples.iter().enumerate() {
            let split = e.split.ok_or(CorpusError::Unsplit(i))?;
            writeln!(out, "{}\t{}\t{}", e.visemes.join(" "), e.text, split)?;
        }
        Ok(())
    }

    pub fn read_tsv<R: BufRead>(reader: R) -> Result<ParallelCorpus, CorpusError> {
        let mut examples = Vec::new();
        for (idx, line) in reader.lines().enumerate() {
            let line = line?;
            if line.is_empty() {
                continue;
            }
            let bad = |message: String| CorpusError::Format { line: idx + 1, message };
            let fields: Vec<&str> = line.split('\t').collect();
            let [vis, text, split] = fields[..] else {
                return Err(bad(format!("expected 3 tab-separated fields, got {}", fields.len())));
            };
            if vis.is_empty() {
                return Err(bad("empty viseme sequence".into()));
            }
            if normalize_sentence(text).as_deref() != Some(text) {
                return Err(bad(format!("text {text:?} is not normalized")));
            }
            examples.push(ParallelExample {
                visemes: vis.split(' ').map(str::to_string).collect(),
                text: text.to_string(),
                split: Some(split.parse().map_err(bad)?),
            });
        }
        Ok(ParallelCorpus { examples })
    }
}

/// Largest-remainder apportionment of `n` items; ties go to the earlier split.
pub fn split_sizes(n: usize, ratios: [f64; 3]) -> Result<[usize; 3], CorpusError> {
    let valid = ratios.iter().all(|r| r.is_finite() && *r >= 0.0)
        && (ratios.iter().sum::<f64>() - 1.0).abs() <= 1e-9;
    if !valid {
        return Err(CorpusError::Ratios(ratios));
    }
    let quotas = ratios.map(|r| r * n as f64);
    let mut sizes = quotas.map(|q| (q.floor() as usize).min(n));
    let assigned: usize = sizes.iter().sum();
    let mut by_remainder = [0usize, 1, 2];
    by_remainder.sort_by(|&a, &b| {
        let ra = quotas[a] - quotas[a].floor();
        let rb = quotas[b] - quotas[b].floor();
        rb.total_cmp(&ra).then(a.cmp(&b))
    });
    for &i in by_remainder.iter().take(n.saturating_sub(assigned)) {
        sizes[i] += 1;
    }
    Ok(sizes)
}
