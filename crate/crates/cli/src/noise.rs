//! Uniform viseme substitution noise, standing in for an imperfect
//! video-to-viseme front end.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use lipdec::lexicon::WORD_BOUNDARY;

#[derive(Debug, Error, PartialEq)]
pub enum NoiseError {
    #[error("noise rate {0} is outside [0, 1]")]
    Rate(f64),
    #[error("viseme alphabet of size {0} leaves no substitute")]
    Alphabet(usize),
}

/// Replaces each viseme, independently with probability `p`, by a uniformly
/// drawn different viseme from `alphabet`. Word-boundary tokens are left in
/// place since they do not come from the lips.
pub fn inject_viseme_noise<S: AsRef<str>>(
    seq: &[S],
    alphabet: &[String],
    p: f64,
    seed: u64,
) -> Result<Vec<String>, NoiseError> {
    inject_with_rng(seq, alphabet, p, &mut ChaCha8Rng::seed_from_u64(seed))
}

/// As [`inject_viseme_noise`], drawing from a caller-owned stream.
pub fn inject_with_rng<S: AsRef<str>, R: Rng>(
    seq: &[S],
    alphabet: &[String],
    p: f64,
    rng: &mut R,
) -> Result<Vec<String>, NoiseError> {
    if !(0.0..=1.0).contains(&p) {
        return Err(NoiseError::Rate(p));
    }
    if p > 0.0 && alphabet.len() < 2 {
        return Err(NoiseError::Alphabet(alphabet.len()));
    }
    Ok(seq
        .iter()
        .map(|tok| {
            let tok = tok.as_ref();
            if p == 0.0 || tok == WORD_BOUNDARY || !rng.gen_bool(p) {
                return tok.to_string();
            }
            let others: Vec<&String> = alphabet.iter().filter(|v| v.as_str() != tok).collect();
            others[rng.gen_range(0..others.len())].clone()
        })
        .collect())
}
