use std::collections::HashMap;

use super::Seq2SeqError;
use crate::lexicon::{VisemeMapping, WORD_BOUNDARY};

pub const PAD: usize = 0;
pub const SOS: usize = 1;
pub const EOS: usize = 2;

const TARGET_SPECIALS: [&str; 3] = ["<pad>", "<sos>", "<eos>"];

/// Source (viseme) and target (character) token tables.
///
/// Target indices: `<pad>`, `<sos>`, `<eos>`, space, apostrophe, `A`..`Z`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenVocab {
    source: Vec<String>,
    source_index: HashMap<String, usize>,
    target: Vec<String>,
    target_index: HashMap<char, usize>,
}

impl TokenVocab {
    pub fn new(source_tokens: Vec<String>) -> Result<TokenVocab, Seq2SeqError> {
        let mut target: Vec<String> = TARGET_SPECIALS.iter().map(|s| s.to_string()).collect();
        target.push(" ".into());
        target.push("'".into());
        target.extend(('A'..='Z').map(String::from));
        TokenVocab::from_parts(source_tokens, target)
    }

    /// Non-NULL visemes of `mapping`, plus the word-boundary token if asked.
    pub fn from_mapping(mapping: &VisemeMapping, boundaries: bool) -> TokenVocab {
        let mut tokens: Vec<String> = mapping.visemes().iter().map(|v| v.as_str().to_string()).collect();
        if boundaries {
            tokens.push(WORD_BOUNDARY.to_string());
        }
        TokenVocab::new(tokens).expect("mapping visemes are distinct")
    }

    pub(crate) fn from_parts(source: Vec<String>, target: Vec<String>) -> Result<TokenVocab, Seq2SeqError> {
        if source.is_empty() {
            return Err(Seq2SeqError::Config("source vocabulary is empty".into()));
        }
        let source_index: HashMap<String, usize> =
            source.iter().enumerate().map(|(i, t)| (t.clone(), i)).collect();
        if source_index.len() != source.len() {
            return Err(Seq2SeqError::Config("duplicate source token".into()));
        }
        let specials_ok = target.len() > 3 && target[..3].iter().zip(TARGET_SPECIALS).all(|(a, b)| a == b);
        let chars_ok = target[3.min(target.len())..].iter().all(|t| t.chars().count() == 1);
        if !specials_ok || !chars_ok {
            return Err(Seq2SeqError::Config("malformed target vocabulary".into()));
        }
        let target_index = target
            .iter()
            .enumerate()
            .skip(3)
            .filter_map(|(i, t)| t.chars().next().map(|c| (c, i)))
            .collect();
        Ok(TokenVocab { source, source_index, target, target_index })
    }

    pub fn source_tokens(&self) -> &[String] {
        &self.source
    }

    pub fn target_tokens(&self) -> &[String] {
        &self.target
    }

    pub fn source_size(&self) -> usize {
        self.source.len()
    }

    pub fn target_size(&self) -> usize {
        self.target.len()
    }

    pub fn encode_source<S: AsRef<str>>(&self, tokens: &[S]) -> Result<Vec<usize>, Seq2SeqError> {
        tokens
            .iter()
            .map(|t| {
                self.source_index
                    .get(t.as_ref())
                    .copied()
                    .ok_or_else(|| Seq2SeqError::Input(format!("unknown source token {:?}", t.as_ref())))
            })
            .collect()
    }

    /// `SOS c1 .. cn EOS`.
    pub fn encode_target(&self, text: &str) -> Result<Vec<usize>, Seq2SeqError> {
        let mut out = Vec::with_capacity(text.len() + 2);
        out.push(SOS);
        for c in text.chars() {
            out.push(self.char_index(c).ok_or_else(|| Seq2SeqError::Input(format!("unknown target character {c:?}")))?);
        }
        out.push(EOS);
        Ok(out)
    }

    fn char_index(&self, c: char) -> Option<usize> {
        self.target_index.get(&c).copied()
    }

    /// Concatenates target tokens, dropping PAD/SOS/EOS.
    pub fn decode_target(&self, ids: &[usize]) -> String {
        ids.iter()
            .filter(|&&i| i > EOS)
            .filter_map(|&i| self.target.get(i))
            .map(String::as_str)
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn vocab() -> TokenVocab {
        TokenVocab::new(vec!["V_a".into(), "V_b".into()]).unwrap()
    }

    #[test]
    fn target_layout() {
        let v = vocab();
        assert_eq!(v.target_size(), 31);
        assert_eq!(v.encode_target("A B'").unwrap(), vec![SOS, 5, 3, 6, 4, EOS]);
        assert!(v.encode_target("a").is_err());
    }

    #[test]
    fn specials_are_stripped() {
        let v = vocab();
        let ids = v.encode_target("HELLO WORLD").unwrap();
        assert_eq!(v.decode_target(&ids), "HELLO WORLD");
        assert_eq!(v.decode_target(&[PAD, SOS, 5, EOS, PAD]), "A");
    }

    #[test]
    fn source_lookup() {
        let v = vocab();
        assert_eq!(v.encode_source(&["V_b", "V_a"]).unwrap(), vec![1, 0]);
        assert!(matches!(v.encode_source(&["V_z"]), Err(Seq2SeqError::Input(_))));
        assert!(TokenVocab::new(vec![]).is_err());
        assert!(TokenVocab::new(vec!["x".into(), "x".into()]).is_err());
    }
}
