//! Pronunciation dictionary lookup and phoneme-to-viseme conversion.
//!
//! Dictionaries use the CMU plain-text format:
//!
//! ```text
//! ;;; comment
//! HEART  HH AA1 R T
//! READ  R EH1 D
//! READ(2)  R IY1 D
//! ```
//!
//! Only the first pronunciation of each word is kept and stress digits are
//! stripped, giving the 39-symbol ARPAbet inventory.

use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::io::BufRead;

use thiserror::Error;

/// Token inserted between words when word boundaries are enabled.
pub const WORD_BOUNDARY: &str = "<wb>";
/// Reserved mapping target meaning "delete this phoneme".
pub const NULL_VISEME: &str = "NULL";

const BUNDLED_DICTIONARY: &str = include_str!("../assets/cmudict-subset.dict");
const BUNDLED_MAPPING: &str = include_str!("../assets/visemes-default.tsv");

#[derive(Debug, Error)]
pub enum LexiconError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("out-of-vocabulary word: {0:?}")]
    OutOfVocabulary(String),
    #[error("mapping does not cover phonemes: {}", .0.join(" "))]
    Uncovered(Vec<String>),
    #[error("mapping needs at least two distinct non-NULL visemes, found {0}")]
    TooFewVisemes(usize),
    #[error("phoneme {0} is not covered by the mapping")]
    UnmappedPhoneme(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

fn parse_error(line: usize, message: impl Into<String>) -> LexiconError {
    LexiconError::Parse { line, message: message.into() }
}

/// An ARPAbet symbol without stress marking.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Phoneme(String);

impl Phoneme {
    /// Parses a dictionary token such as `AA1` or `HH`, dropping the stress digit.
    pub fn parse(token: &str) -> Option<Phoneme> {
        let symbol = token.strip_suffix(|c: char| c.is_ascii_digit()).unwrap_or(token);
        if symbol.is_empty() || !symbol.bytes().all(|b| b.is_ascii_uppercase()) {
            return None;
        }
        Some(Phoneme(symbol.to_string()))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for Phoneme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// A viseme class label from a mapping's codomain. Never `NULL`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Viseme(String);

impl Viseme {
    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for Viseme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

fn is_lexical_word(word: &str) -> bool {
    !word.is_empty() && word.bytes().all(|b| b.is_ascii_uppercase() || b == b'\'')
}

/// Word to first-listed pronunciation.
#[derive(Debug, Clone, Default)]
pub struct Lexicon {
    entries: HashMap<String, Vec<Phoneme>>,
    inventory: BTreeSet<Phoneme>,
}

impl Lexicon {
    /// Parses a CMU-format dictionary, keeping the first pronunciation per word.
    pub fn from_reader<R: BufRead>(reader: R) -> Result<Lexicon, LexiconError> {
        let mut lexicon = Lexicon::default();
        for (idx, line) in reader.lines().enumerate() {
            lexicon.parse_line(idx + 1, &line?)?;
        }
        Ok(lexicon)
    }

    pub fn parse_str(text: &str) -> Result<Lexicon, LexiconError> {
        Lexicon::from_reader(text.as_bytes())
    }

    /// The dictionary subset shipped with the crate.
    pub fn bundled() -> Lexicon {
        Lexicon::parse_str(BUNDLED_DICTIONARY).expect("bundled dictionary parses")
    }

    fn parse_line(&mut self, line_no: usize, line: &str) -> Result<(), LexiconError> {
        if line.starts_with(";;;") {
            return Ok(());
        }
        let line = line.split('#').next().unwrap_or_default();
        let mut fields = line.split_whitespace();
        let Some(word_field) = fields.next() else {
            return Ok(());
        };
        let (word, alternate) = split_variant(word_field)
            .ok_or_else(|| parse_error(line_no, format!("unparseable word field {word_field:?}")))?;
        let phonemes = fields
            .map(|tok| {
                Phoneme::parse(tok)
                    .ok_or_else(|| parse_error(line_no, format!("invalid phoneme {tok:?}")))
            })
            .collect::<Result<Vec<_>, _>>()?;
        if phonemes.is_empty() {
            return Err(parse_error(line_no, format!("no phonemes for {word_field:?}")));
        }

        let word = word.to_uppercase();
        if alternate || !is_lexical_word(&word) || self.entries.contains_key(&word) {
            return Ok(());
        }
        self.inventory.extend(phonemes.iter().cloned());
        self.entries.insert(word, phonemes);
        Ok(())
    }

    pub fn lookup(&self, word: &str) -> Result<&[Phoneme], LexiconError> {
        self.entries
            .get(word)
            .map(Vec::as_slice)
            .ok_or_else(|| LexiconError::OutOfVocabulary(word.to_string()))
    }

    pub fn contains(&self, word: &str) -> bool {
        self.entries.contains_key(word)
    }

    pub fn inventory(&self) -> &BTreeSet<Phoneme> {
        &self.inventory
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// All words in sorted order.
    pub fn words(&self) -> Vec<&str> {
        let mut words: Vec<&str> = self.entries.keys().map(String::as_str).collect();
        words.sort_unstable();
        words
    }

    pub fn word_to_visemes(
        &self,
        mapping: &VisemeMapping,
        word: &str,
    ) -> Result<Vec<Viseme>, LexiconError> {
        mapping.map_phonemes(self.lookup(word)?)
    }

    /// Concatenated viseme sequence of a normalized sentence. With
    /// `boundaries` set, [`WORD_BOUNDARY`] separates consecutive words.
    pub fn sentence_to_visemes(
        &self,
        mapping: &VisemeMapping,
        sentence: &str,
        boundaries: bool,
    ) -> Result<Vec<String>, LexiconError> {
        let mut out = Vec::new();
        for (i, word) in sentence.split_whitespace().enumerate() {
            if boundaries && i > 0 {
                out.push(WORD_BOUNDARY.to_string());
            }
            out.extend(self.word_to_visemes(mapping, word)?.into_iter().map(|v| v.0));
        }
        Ok(out)
    }
}

/// Splits `WORD(2)` into `("WORD", true)` and `WORD` into `("WORD", false)`.
fn split_variant(field: &str) -> Option<(&str, bool)> {
    match field.find('(') {
        None => Some((field, false)),
        Some(0) => None,
        Some(open) => {
            let index = field[open + 1..].strip_suffix(')')?;
            if index.is_empty() || !index.bytes().all(|b| b.is_ascii_digit()) {
                return None;
            }
            Some((&field[..open], true))
        }
    }
}

/// Phoneme to viseme table, total over a lexicon inventory.
#[derive(Debug, Clone)]
pub struct VisemeMapping {
    name: String,
    version: String,
    table: HashMap<Phoneme, Option<Viseme>>,
}

impl VisemeMapping {
    /// Loads `PHONEME<TAB>VISEME` rows. `# name: ...` and `# version: ...`
    /// comment lines set the metadata; other `#` lines are ignored.
    pub fn from_reader<R: BufRead>(
        reader: R,
        inventory: &BTreeSet<Phoneme>,
    ) -> Result<VisemeMapping, LexiconError> {
        let mut name = String::from("unnamed");
        let mut version = String::from("0");
        let mut table = HashMap::new();
        for (idx, line) in reader.lines().enumerate() {
            let line_no = idx + 1;
            let line = line?;
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            if let Some(comment) = line.strip_prefix('#') {
                let comment = comment.trim();
                if let Some(v) = comment.strip_prefix("name:") {
                    name = v.trim().to_string();
                } else if let Some(v) = comment.strip_prefix("version:") {
                    version = v.trim().to_string();
                }
                continue;
            }
            let (ph, vis) = line
                .split_once('\t')
                .ok_or_else(|| parse_error(line_no, "expected PHONEME<TAB>VISEME"))?;
            let (ph, vis) = (ph.trim(), vis.trim());
            let phoneme = Phoneme::parse(ph)
                .filter(|p| p.as_str() == ph)
                .ok_or_else(|| parse_error(line_no, format!("invalid phoneme {ph:?}")))?;
            if vis.is_empty() || vis.contains(char::is_whitespace) || vis == WORD_BOUNDARY {
                return Err(parse_error(line_no, format!("invalid viseme {vis:?}")));
            }
            let viseme = (vis != NULL_VISEME).then(|| Viseme(vis.to_string()));
            if table.insert(phoneme, viseme).is_some() {
                return Err(parse_error(line_no, format!("duplicate phoneme {ph}")));
            }
        }

        let uncovered: Vec<String> = inventory
            .iter()
            .filter(|p| !table.contains_key(*p))
            .map(|p| p.0.clone())
            .collect();
        if !uncovered.is_empty() {
            return Err(LexiconError::Uncovered(uncovered));
        }
        let mapping = VisemeMapping { name, version, table };
        let distinct = mapping.visemes().len();
        if distinct < 2 {
            return Err(LexiconError::TooFewVisemes(distinct));
        }
        Ok(mapping)
    }

    pub fn parse_str(text: &str, inventory: &BTreeSet<Phoneme>) -> Result<VisemeMapping, LexiconError> {
        VisemeMapping::from_reader(text.as_bytes(), inventory)
    }

    /// The default mapping shipped with the crate, checked against `inventory`.
    pub fn bundled(inventory: &BTreeSet<Phoneme>) -> Result<VisemeMapping, LexiconError> {
        VisemeMapping::parse_str(BUNDLED_MAPPING, inventory)
    }

    /// Every phoneme of `inventory` is its own viseme; nothing is deleted.
    pub fn identity(inventory: &BTreeSet<Phoneme>) -> VisemeMapping {
        let table = inventory.iter().map(|p| (p.clone(), Some(Viseme(p.0.clone())))).collect();
        VisemeMapping { name: "identity".into(), version: "1".into(), table }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn version(&self) -> &str {
        &self.version
    }

    /// `None` means the phoneme maps to NULL.
    pub fn get(&self, phoneme: &Phoneme) -> Result<Option<&Viseme>, LexiconError> {
        self.table
            .get(phoneme)
            .map(Option::as_ref)
            .ok_or_else(|| LexiconError::UnmappedPhoneme(phoneme.0.clone()))
    }

    /// Distinct non-NULL visemes in sorted order.
    pub fn visemes(&self) -> Vec<Viseme> {
        let set: BTreeSet<&Viseme> = self.table.values().flatten().collect();
        set.into_iter().cloned().collect()
    }

    /// Element-wise mapping with NULL outputs dropped.
    pub fn map_phonemes(&self, phonemes: &[Phoneme]) -> Result<Vec<Viseme>, LexiconError> {
        let mut out = Vec::with_capacity(phonemes.len());
        for p in phonemes {
            if let Some(v) = self.get(p)? {
                out.push(v.clone());
            }
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ph(symbols: &str) -> Vec<Phoneme> {
        symbols.split_whitespace().map(|s| Phoneme::parse(s).unwrap()).collect()
    }

    fn bundled() -> (Lexicon, VisemeMapping) {
        let lex = Lexicon::bundled();
        let map = VisemeMapping::bundled(lex.inventory()).unwrap();
        (lex, map)
    }

    #[test]
    fn strips_stress_and_keeps_entry() {
        let lex = Lexicon::parse_str("HEART  HH AA1 R T\n").unwrap();
        assert_eq!(lex.lookup("HEART").unwrap(), ph("HH AA R T").as_slice());
    }

    #[test]
    fn first_pronunciation_wins() {
        let lex = Lexicon::parse_str("READ  R IY1 D\nREAD(2)  R EH1 D\n").unwrap();
        assert_eq!(lex.len(), 1);
        assert_eq!(lex.lookup("READ").unwrap(), ph("R IY D").as_slice());
    }

    #[test]
    fn comments_and_blank_lines_are_ignored() {
        let lex = Lexicon::parse_str(";;; comment\n\n   \nART  AA1 R T\n").unwrap();
        assert_eq!(lex.words(), vec!["ART"]);
    }

    #[test]
    fn modern_cmu_lines_are_accepted() {
        let lex = Lexicon::parse_str("aalen AE1 L AH0 N # place, german\na. EY1\nit's IH1 T S\n").unwrap();
        assert_eq!(lex.lookup("AALEN").unwrap(), ph("AE L AH N").as_slice());
        assert!(lex.contains("IT'S"));
        assert!(!lex.contains("A."));
    }

    #[test]
    fn malformed_lines_report_line_number() {
        match Lexicon::parse_str("ART  AA1 R T\nLONELY\n") {
            Err(LexiconError::Parse { line: 2, .. }) => {}
            other => panic!("unexpected {other:?}"),
        }
        for bad in ["WORD(x)  W ER1 D", "(2)  W ER1 D", "WORD(2  W", "WORD  w er1"] {
            assert!(matches!(Lexicon::parse_str(bad), Err(LexiconError::Parse { line: 1, .. })), "{bad}");
        }
    }

    #[test]
    fn bundled_lookups() {
        let (lex, _) = bundled();
        assert_eq!(lex.lookup("ART").unwrap(), ph("AA R T").as_slice());
        assert_eq!(lex.lookup("HEART").unwrap(), ph("HH AA R T").as_slice());
        assert!(matches!(lex.lookup("ZZXQ"), Err(LexiconError::OutOfVocabulary(w)) if w == "ZZXQ"));
        assert_eq!(lex.inventory().len(), 39);
    }

    #[test]
    fn bilabials_share_a_viseme() {
        let (_, map) = bundled();
        let b = map.map_phonemes(&ph("B")).unwrap();
        assert_eq!(b, map.map_phonemes(&ph("P")).unwrap());
        assert_eq!(b, map.map_phonemes(&ph("M")).unwrap());
        assert_eq!(b[0].as_str(), "V_bmp");
    }

    #[test]
    fn glottal_is_deleted() {
        let (lex, map) = bundled();
        assert_eq!(
            map.map_phonemes(&ph("HH AA R T")).unwrap(),
            map.map_phonemes(&ph("AA R T")).unwrap()
        );
        assert_eq!(lex.word_to_visemes(&map, "ART").unwrap(), lex.word_to_visemes(&map, "HEART").unwrap());
        assert!(map.map_phonemes(&[]).unwrap().is_empty());
    }

    #[test]
    fn mapping_totality_and_duplicates() {
        let inventory: BTreeSet<Phoneme> = ph("AA B").into_iter().collect();
        let err = VisemeMapping::parse_str("B\tV_bmp\nP\tV_bmp\n", &inventory).unwrap_err();
        assert!(matches!(err, LexiconError::Uncovered(ref u) if u == &["AA".to_string()]), "{err}");
        let err = VisemeMapping::parse_str("B\tV_bmp\nB\tV_x\nAA\tV_a\n", &inventory).unwrap_err();
        assert!(matches!(err, LexiconError::Parse { line: 2, .. }), "{err}");
        let err = VisemeMapping::parse_str("B\tV_bmp\nAA\tV_bmp\n", &inventory).unwrap_err();
        assert!(matches!(err, LexiconError::TooFewVisemes(1)));
    }

    #[test]
    fn mapping_metadata_and_null_rows() {
        let inventory: BTreeSet<Phoneme> = ph("AA HH B").into_iter().collect();
        let text = "# name: tiny\n# version: 2\nAA\tV_a\nHH\tNULL\nB\tV_b\n";
        let map = VisemeMapping::parse_str(text, &inventory).unwrap();
        assert_eq!((map.name(), map.version()), ("tiny", "2"));
        assert!(map.get(&ph("HH")[0]).unwrap().is_none());
        assert_eq!(map.visemes().len(), 2);
        assert!(map.map_phonemes(&ph("ZH")).is_err());
    }

    #[test]
    fn sentence_boundaries() {
        let (lex, map) = bundled();
        let art: Vec<String> =
            lex.word_to_visemes(&map, "ART").unwrap().iter().map(|v| v.to_string()).collect();
        let plain = lex.sentence_to_visemes(&map, "ART ART", false).unwrap();
        assert_eq!(plain, [art.clone(), art.clone()].concat());
        let marked = lex.sentence_to_visemes(&map, "ART ART", true).unwrap();
        assert_eq!(marked, [art.clone(), vec![WORD_BOUNDARY.to_string()], art].concat());
        assert!(matches!(
            lex.sentence_to_visemes(&map, "ART ZZXQ QQQ", false),
            Err(LexiconError::OutOfVocabulary(w)) if w == "ZZXQ"
        ));
        assert!(matches!(lex.word_to_visemes(&map, ""), Err(LexiconError::OutOfVocabulary(_))));
    }

    #[test]
    fn example_sentence_visemes() {
        let (lex, map) = bundled();
        let got = lex.sentence_to_visemes(&map, "SO I SHOULD TALK ABOUT ART", false).unwrap();
        // S OW | AY | SH UH D | T AO K | AH B AW T | AA R T
        let expected = "V_sz V_uw V_ae V_sh V_uw V_tdn V_tdn V_aa V_kgw V_aa V_bmp V_aa V_tdn V_aa V_lr V_tdn";
        assert_eq!(got.join(" "), expected);
    }
}
