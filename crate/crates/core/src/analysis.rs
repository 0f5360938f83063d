//! Homoviseme grouping and the context-free word-level error floor.
//!
//! Words whose viseme sequences coincide cannot be told apart by lip shape
//! alone. A decoder that sees one word at a time does best by always
//! emitting the most frequent member of each class; every other member's
//! occurrences are then errors. Summing those losses gives the lowest WER any
//! context-free word decoder can reach on the corpus.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;

use thiserror::Error;

use crate::corpus::VocabStats;
use crate::lexicon::{Lexicon, LexiconError, VisemeMapping};

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error("vocabulary word cannot be mapped: {0}")]
    Contract(#[from] LexiconError),
    #[error("total token count is zero")]
    Degenerate,
    #[error("class frequencies sum to {mass} but total_tokens is {total}")]
    MassMismatch { mass: u64, total: u64 },
    #[error("homoviseme class has no members")]
    EmptyClass,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HomovisemeClass {
    pub key: Vec<String>,
    /// Sorted by descending frequency, then word.
    pub members: Vec<(String, u64)>,
    pub representative: String,
}

impl HomovisemeClass {
    /// Orders members and picks the most frequent one as representative
    /// (lexicographically smallest word on ties).
    pub fn new(key: Vec<String>, mut members: Vec<(String, u64)>) -> Result<Self, AnalysisError> {
        members.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        let representative = members.first().ok_or(AnalysisError::EmptyClass)?.0.clone();
        Ok(HomovisemeClass { key, members, representative })
    }

    pub fn mass(&self) -> u64 {
        self.members.iter().map(|(_, f)| f).sum()
    }

    pub fn representative_frequency(&self) -> u64 {
        self.members[0].1
    }

    /// Tokens a context-free decoder necessarily gets wrong in this class.
    pub fn lost_mass(&self) -> u64 {
        self.mass() - self.representative_frequency()
    }
}

/// Partitions the counted vocabulary by viseme sequence. Classes come out
/// ordered by key.
pub fn group_homovisemes(
    stats: &VocabStats,
    lexicon: &Lexicon,
    mapping: &VisemeMapping,
) -> Result<Vec<HomovisemeClass>, AnalysisError> {
    let mut groups: BTreeMap<Vec<String>, Vec<(String, u64)>> = BTreeMap::new();
    for (word, count) in stats.sorted() {
        let key = lexicon
            .word_to_visemes(mapping, word)?
            .into_iter()
            .map(|v| v.as_str().to_string())
            .collect();
        groups.entry(key).or_default().push((word.to_string(), count));
    }
    groups.into_iter().map(|(key, members)| HomovisemeClass::new(key, members)).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct LowerBoundReport {
    pub wer_lb: f64,
    pub total_tokens: u64,
    pub covered_tokens: u64,
    pub classes: Vec<HomovisemeClass>,
    pub mapping_name: String,
}

/// Decodes every class to its representative and counts what that covers.
pub fn greedy_lower_bound(
    classes: &[HomovisemeClass],
    total_tokens: u64,
    mapping_name: &str,
) -> Result<LowerBoundReport, AnalysisError> {
    if total_tokens == 0 {
        return Err(AnalysisError::Degenerate);
    }
    let mass: u64 = classes.iter().map(HomovisemeClass::mass).sum();
    if mass != total_tokens {
        return Err(AnalysisError::MassMismatch { mass, total: total_tokens });
    }
    let covered_tokens: u64 = classes.iter().map(HomovisemeClass::representative_frequency).sum();
    Ok(LowerBoundReport {
        wer_lb: 1.0 - covered_tokens as f64 / total_tokens as f64,
        total_tokens,
        covered_tokens,
        classes: classes.to_vec(),
        mapping_name: mapping_name.to_string(),
    })
}

impl LowerBoundReport {
    pub fn num_ambiguous(&self) -> usize {
        self.classes.iter().filter(|c| c.members.len() > 1).count()
    }

    /// Key/value header followed by one `class` line per homoviseme class.
    pub fn to_report_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "mapping_name={}", self.mapping_name);
        let _ = writeln!(s, "total_tokens={}", self.total_tokens);
        let _ = writeln!(s, "covered_tokens={}", self.covered_tokens);
        let _ = writeln!(s, "wer_lb={:.4}", self.wer_lb);
        let _ = writeln!(s, "n_classes={}", self.classes.len());
        let _ = writeln!(s, "n_ambiguous_classes={}", self.num_ambiguous());
        for c in &self.classes {
            let members: Vec<String> = c.members.iter().map(|(w, f)| format!("{w}:{f}")).collect();
            let _ = writeln!(s, "class\t{}\t{}\t{}", c.key.join(" "), c.representative, members.join(" "));
        }
        s
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AmbiguitySummary {
    /// class size -> number of classes of that size
    pub size_histogram: BTreeMap<usize, usize>,
    /// Classes with non-zero lost mass, most lost first.
    pub top: Vec<(HomovisemeClass, u64)>,
}

pub fn ambiguity_report(classes: &[HomovisemeClass], top_k: usize) -> AmbiguitySummary {
    let mut size_histogram = BTreeMap::new();
    for c in classes {
        *size_histogram.entry(c.members.len()).or_insert(0) += 1;
    }
    let mut lossy: Vec<(HomovisemeClass, u64)> = classes
        .iter()
        .filter(|c| c.lost_mass() > 0)
        .map(|c| (c.clone(), c.lost_mass()))
        .collect();
    lossy.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.key.cmp(&b.0.key)));
    lossy.truncate(top_k);
    AmbiguitySummary { size_histogram, top: lossy }
}

impl AmbiguitySummary {
    /// Plain-text table for terminals.
    pub fn to_table(&self) -> String {
        let mut s = String::from("class size  classes\n");
        for (size, n) in &self.size_histogram {
            let _ = writeln!(s, "{size:>10}  {n}");
        }
        s.push_str("\nlost  representative  members\n");
        for (c, lost) in &self.top {
            let members: Vec<String> = c.members.iter().map(|(w, f)| format!("{w}({f})")).collect();
            let _ = writeln!(s, "{lost:>4}  {:<14}  {}", c.representative, members.join(" "));
        }
        s
    }
}

/// Inverse of the grouping: word -> class index.
pub fn class_index(classes: &[HomovisemeClass]) -> HashMap<&str, usize> {
    classes
        .iter()
        .enumerate()
        .flat_map(|(i, c)| c.members.iter().map(move |(w, _)| (w.as_str(), i)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn assets() -> (Lexicon, VisemeMapping) {
        let lex = Lexicon::bundled();
        let map = VisemeMapping::bundled(lex.inventory()).unwrap();
        (lex, map)
    }

    fn class(members: &[(&str, u64)]) -> HomovisemeClass {
        let members = members.iter().map(|(w, f)| (w.to_string(), *f)).collect();
        HomovisemeClass::new(vec![], members).unwrap()
    }

    #[test]
    fn art_and_heart_group_together() {
        let (lex, map) = assets();
        let stats = VocabStats::from_counts([("ART", 5), ("HEART", 3), ("CAT", 2)]);
        let classes = group_homovisemes(&stats, &lex, &map).unwrap();
        assert_eq!(classes.len(), 2);
        let art = classes.iter().find(|c| c.members.len() == 2).unwrap();
        assert_eq!(art.representative, "ART");
        assert_eq!(art.members, vec![("ART".to_string(), 5), ("HEART".to_string(), 3)]);
        let report = greedy_lower_bound(&classes, stats.total_tokens(), map.name()).unwrap();
        assert_eq!(report.covered_tokens, 7);
        assert!((report.wer_lb - 0.30).abs() < 1e-12);
    }

    #[test]
    fn singleton_and_tie_break() {
        let (lex, map) = assets();
        let classes = group_homovisemes(&VocabStats::from_counts([("A", 1)]), &lex, &map).unwrap();
        assert_eq!(classes.len(), 1);
        let tie = group_homovisemes(&VocabStats::from_counts([("HEART", 3), ("ART", 3)]), &lex, &map).unwrap();
        assert_eq!(tie[0].representative, "ART");
    }

    #[test]
    fn oov_in_stats_is_contract_error() {
        let (lex, map) = assets();
        let err = group_homovisemes(&VocabStats::from_counts([("ZZXQ", 1)]), &lex, &map).unwrap_err();
        assert!(matches!(err, AnalysisError::Contract(LexiconError::OutOfVocabulary(_))));
    }

    #[test]
    fn lower_bound_cases() {
        let singles = [class(&[("A", 4)]), class(&[("B", 2)])];
        assert_eq!(greedy_lower_bound(&singles, 6, "m").unwrap().wer_lb, 0.0);
        let one = [class(&[("A", 1), ("B", 1), ("C", 1)])];
        let r = greedy_lower_bound(&one, 3, "m").unwrap();
        assert!((r.wer_lb - 2.0 / 3.0).abs() < 1e-12);
        assert!(matches!(greedy_lower_bound(&[], 0, "m"), Err(AnalysisError::Degenerate)));
        assert!(matches!(greedy_lower_bound(&one, 4, "m"), Err(AnalysisError::MassMismatch { .. })));
    }

    #[test]
    fn histogram_and_top_k() {
        let classes = [class(&[("ART", 5), ("HEART", 3)]), class(&[("CAT", 2)])];
        let summary = ambiguity_report(&classes, 5);
        assert_eq!(summary.size_histogram, BTreeMap::from([(1, 1), (2, 1)]));
        assert_eq!(summary.top.len(), 1);
        assert_eq!(summary.top[0].1, 3);
        let singles = [class(&[("A", 1)]), class(&[("B", 9)])];
        assert!(ambiguity_report(&singles, 5).top.is_empty());
    }

    #[test]
    fn report_text_has_fixed_keys() {
        let classes = [class(&[("ART", 5), ("HEART", 3)]), class(&[("CAT", 2)])];
        let text = greedy_lower_bound(&classes, 10, "default").unwrap().to_report_text();
        assert!(text.contains("wer_lb=0.3000\n"));
        assert!(text.contains("covered_tokens=7\n"));
        assert!(text.contains("n_ambiguous_classes=1\n"));
    }
}
