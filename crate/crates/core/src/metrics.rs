//! Levenshtein alignment, WER and CER.
//!
//! Rates are token-weighted over a corpus (sum of distances over sum of
//! reference lengths) and are not clamped: a hypothesis with many insertions
//! can score above 1. CER counts spaces as characters.

use std::fmt::Write as _;

use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum MetricsError {
    #[error("reference is empty")]
    EmptyReference,
    #[error("no examples to evaluate")]
    NoExamples,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ErrorBreakdown {
    pub distance: usize,
    pub substitutions: usize,
    pub deletions: usize,
    pub insertions: usize,
    pub reference_length: usize,
}

impl ErrorBreakdown {
    pub fn rate(&self) -> Option<f64> {
        (self.reference_length > 0).then(|| self.distance as f64 / self.reference_length as f64)
    }
}

/// Unit-cost edit distance from `reference` to `hypothesis`, with the
/// backtrace preferring substitution (or match), then deletion, then insertion.
pub fn edit_distance<T: PartialEq>(reference: &[T], hypothesis: &[T]) -> ErrorBreakdown {
    let (n, m) = (reference.len(), hypothesis.len());
    let width = m + 1;
    let mut dp = vec![0usize; (n + 1) * width];
    for j in 0..=m {
        dp[j] = j;
    }
    for i in 1..=n {
        dp[i * width] = i;
        for j in 1..=m {
            let cost = usize::from(reference[i - 1] != hypothesis[j - 1]);
            let diag = dp[(i - 1) * width + j - 1] + cost;
            let up = dp[(i - 1) * width + j] + 1;
            let left = dp[i * width + j - 1] + 1;
            dp[i * width + j] = diag.min(up).min(left);
        }
    }

    let mut out = ErrorBreakdown { distance: dp[n * width + m], reference_length: n, ..Default::default() };
    let (mut i, mut j) = (n, m);
    while i > 0 || j > 0 {
        let here = dp[i * width + j];
        if i > 0 && j > 0 {
            let cost = usize::from(reference[i - 1] != hypothesis[j - 1]);
            if dp[(i - 1) * width + j - 1] + cost == here {
                out.substitutions += cost;
                i -= 1;
                j -= 1;
                continue;
            }
        }
        if i > 0 && dp[(i - 1) * width + j] + 1 == here {
            out.deletions += 1;
            i -= 1;
        } else {
            out.insertions += 1;
            j -= 1;
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SentenceErrors {
    pub word: ErrorBreakdown,
    pub char: ErrorBreakdown,
}

impl SentenceErrors {
    pub fn wer(&self) -> f64 {
        self.word.rate().unwrap_or(0.0)
    }

    pub fn cer(&self) -> f64 {
        self.char.rate().unwrap_or(0.0)
    }
}

pub fn sentence_error_rates(reference: &str, hypothesis: &str) -> Result<SentenceErrors, MetricsError> {
    if reference.is_empty() {
        return Err(MetricsError::EmptyReference);
    }
    let ref_words: Vec<&str> = reference.split_whitespace().collect();
    let hyp_words: Vec<&str> = hypothesis.split_whitespace().collect();
    let ref_chars: Vec<char> = reference.chars().collect();
    let hyp_chars: Vec<char> = hypothesis.chars().collect();
    Ok(SentenceErrors {
        word: edit_distance(&ref_words, &hyp_words),
        char: edit_distance(&ref_chars, &hyp_chars),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SentenceRecord {
    pub reference: String,
    pub hypothesis: String,
    pub errors: SentenceErrors,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub wer: f64,
    pub cer: f64,
    pub n_examples: usize,
    pub per_sentence: Vec<SentenceRecord>,
    pub model_id: String,
    pub config_id: String,
}

/// Token-weighted corpus WER/CER over (reference, hypothesis) pairs.
pub fn corpus_error_rates<R, H>(pairs: &[(R, H)]) -> Result<EvalReport, MetricsError>
where
    R: AsRef<str>,
    H: AsRef<str>,
{
    if pairs.is_empty() {
        return Err(MetricsError::NoExamples);
    }
    let per_sentence = pairs
        .iter()
        .map(|(r, h)| {
            Ok(SentenceRecord {
                reference: r.as_ref().to_string(),
                hypothesis: h.as_ref().to_string(),
                errors: sentence_error_rates(r.as_ref(), h.as_ref())?,
            })
        })
        .collect::<Result<Vec<_>, _>>()?;
    let ratio = |f: fn(&SentenceErrors) -> &ErrorBreakdown| {
        let dist: usize = per_sentence.iter().map(|s| f(&s.errors).distance).sum();
        let len: usize = per_sentence.iter().map(|s| f(&s.errors).reference_length).sum();
        dist as f64 / len as f64
    };
    Ok(EvalReport {
        wer: ratio(|e| &e.word),
        cer: ratio(|e| &e.char),
        n_examples: per_sentence.len(),
        per_sentence,
        model_id: String::new(),
        config_id: String::new(),
    })
}

impl EvalReport {
    pub fn with_ids(mut self, model_id: impl Into<String>, config_id: impl Into<String>) -> Self {
        self.model_id = model_id.into();
        self.config_id = config_id.into();
        self
    }

    /// Fixed-field text serialization.
    pub fn to_report_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "wer={:.6}", self.wer);
        let _ = writeln!(s, "cer={:.6}", self.cer);
        let _ = writeln!(s, "n_examples={}", self.n_examples);
        let _ = writeln!(s, "model={}", self.model_id);
        let _ = writeln!(s, "config={}", self.config_id);
        s.push_str("per_sentence:\n");
        for (i, r) in self.per_sentence.iter().enumerate() {
            let (w, c) = (&r.errors.word, &r.errors.char);
            let _ = writeln!(
                s,
                "{i}\t{}/{}\t{}/{}\t{}\t{}",
                w.distance, w.reference_length, c.distance, c.reference_length, r.reference, r.hypothesis
            );
        }
        s
    }

    /// Two-column ground truth / predicted table of the first `limit` rows,
    /// with wrong hypothesis words bracketed.
    pub fn sample_table(&self, limit: usize) -> String {
        let rows: Vec<(&str, String)> = self
            .per_sentence
            .iter()
            .take(limit)
            .map(|r| (r.reference.as_str(), mark_errors(&r.reference, &r.hypothesis)))
            .collect();
        let width = rows.iter().map(|(r, _)| r.len()).max().unwrap_or(0).max("Ground Truth".len());
        let mut s = format!("{:<width$} | Predicted\n", "Ground Truth");
        let _ = writeln!(s, "{}-+-{}", "-".repeat(width), "-".repeat(9));
        for (r, h) in rows {
            let _ = writeln!(s, "{r:<width$} | {h}");
        }
        s
    }
}

/// Brackets hypothesis words that are not aligned to an identical reference word.
fn mark_errors(reference: &str, hypothesis: &str) -> String {
    let r: Vec<&str> = reference.split_whitespace().collect();
    let h: Vec<&str> = hypothesis.split_whitespace().collect();
    let lcs = {
        let mut dp = vec![vec![0usize; h.len() + 1]; r.len() + 1];
        for i in (0..r.len()).rev() {
            for j in (0..h.len()).rev() {
                dp[i][j] = if r[i] == h[j] { dp[i + 1][j + 1] + 1 } else { dp[i + 1][j].max(dp[i][j + 1]) };
            }
        }
        let (mut i, mut j, mut keep) = (0, 0, vec![false; h.len()]);
        while i < r.len() && j < h.len() {
            if r[i] == h[j] {
                keep[j] = true;
                i += 1;
                j += 1;
            } else if dp[i + 1][j] >= dp[i][j + 1] {
                i += 1;
            } else {
                j += 1;
            }
        }
        keep
    };
    h.iter()
        .zip(lcs)
        .map(|(w, ok)| if ok { w.to_string() } else { format!("[{w}]") })
        .collect::<Vec<_>>()
        .join(" ")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn chars(s: &str) -> Vec<char> {
        s.chars().collect()
    }

    #[test]
    fn kitten_sitting() {
        let e = edit_distance(&chars("kitten"), &chars("sitting"));
        assert_eq!(e.distance, 3);
        assert_eq!((e.substitutions, e.deletions, e.insertions), (2, 0, 1));
    }

    #[test]
    fn identity_and_exhaustion() {
        assert_eq!(edit_distance(&chars("abc"), &chars("abc")).distance, 0);
        let e = edit_distance(&chars("abcd"), &[]);
        assert_eq!((e.distance, e.deletions), (4, 4));
        let e = edit_distance::<char>(&[], &chars("ab"));
        assert_eq!((e.distance, e.insertions), (2, 2));
    }

    #[test]
    fn table_rows() {
        let s = sentence_error_rates("SO I SHOULD TALK ABOUT ART", "SO I SHOULD TALK ABOUT YOU").unwrap();
        assert_eq!((s.word.distance, s.word.reference_length), (1, 6));
        assert!((s.wer() - 1.0 / 6.0).abs() < 1e-12);
        let s = sentence_error_rates("AND SO THIS IS WHAT I DID", "AND SO THIS IS WHAT I DID").unwrap();
        assert_eq!((s.wer(), s.cer()), (0.0, 0.0));
        assert_eq!(sentence_error_rates("A", "").unwrap().wer(), 1.0);
        assert_eq!(sentence_error_rates("", "A"), Err(MetricsError::EmptyReference));
    }

    #[test]
    fn rates_are_not_clamped() {
        let s = sentence_error_rates("A", "B C D").unwrap();
        assert_eq!(s.wer(), 3.0);
    }

    #[test]
    fn corpus_aggregation_is_token_weighted() {
        let report = corpus_error_rates(&[("A B C D", "A B C X"), ("A B C D E F", "A B C D E F")]).unwrap();
        assert!((report.wer - 0.10).abs() < 1e-12);
        assert_eq!(report.n_examples, 2);
        let clean = corpus_error_rates(&[("X Y", "X Y")]).unwrap();
        assert_eq!((clean.wer, clean.cer), (0.0, 0.0));
        assert_eq!(corpus_error_rates::<&str, &str>(&[]), Err(MetricsError::NoExamples));
    }

    #[test]
    fn sample_table_marks_errors() {
        let report = corpus_error_rates(&[("SO I SHOULD TALK ABOUT ART", "SO I SHOULD TALK ABOUT YOU")]).unwrap();
        let table = report.sample_table(10);
        assert!(table.contains("SO I SHOULD TALK ABOUT ART | SO I SHOULD TALK ABOUT [YOU]"), "{table}");
    }
}
