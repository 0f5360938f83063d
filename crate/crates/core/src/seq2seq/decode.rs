//! Greedy and beam search over any step-wise scorer.

use std::cmp::Ordering;

use super::model::Encoded;
use super::params::{ModelParams, Scalar};
use super::vocab::{TokenVocab, EOS, SOS};
use super::Seq2SeqError;

/// Something that scores the next token given a decoder state and the
/// previously emitted token.
pub trait StepModel {
    type State: Clone;

    fn start(&self) -> Self::State;

    /// Log-probabilities over the whole target vocabulary, plus the state
    /// after consuming `prev`.
    fn step(&self, state: &Self::State, prev: usize) -> (Vec<f64>, Self::State);
}

#[derive(Debug, Clone, PartialEq)]
pub struct Hypothesis {
    /// Emitted tokens, ending in EOS if `finished`.
    pub tokens: Vec<usize>,
    pub log_prob: f64,
    pub finished: bool,
}

impl Hypothesis {
    /// Log-probability per emitted token; 0 for the empty sequence.
    pub fn score(&self) -> f64 {
        if self.tokens.is_empty() {
            0.0
        } else {
            self.log_prob / self.tokens.len() as f64
        }
    }
}

/// Output budget used when the caller does not give one.
pub fn default_max_len(source_len: usize) -> usize {
    3 * source_len + 10
}

fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, x) in v.iter().enumerate().skip(1) {
        if *x > v[best] {
            best = i;
        }
    }
    best
}

/// Takes the argmax token (lowest index on ties) for at most `max_len` steps.
pub fn greedy_search<M: StepModel>(model: &M, max_len: usize) -> Hypothesis {
    let mut hyp = Hypothesis { tokens: Vec::new(), log_prob: 0.0, finished: false };
    let mut state = model.start();
    let mut prev = SOS;
    while hyp.tokens.len() < max_len {
        let (lp, next) = model.step(&state, prev);
        let tok = argmax(&lp);
        hyp.tokens.push(tok);
        hyp.log_prob += lp[tok];
        if tok == EOS {
            hyp.finished = true;
            break;
        }
        state = next;
        prev = tok;
    }
    hyp
}

/// Length-normalized beam search.
///
/// Each step expands every live hypothesis, keeps the `beam_width` best
/// expansions by normalized score, and retires those ending in EOS. The
/// search stops when no live hypothesis remains or the budget is spent; the
/// best retired or surviving hypothesis wins. Ties are broken by raw
/// log-probability, then by the earlier-ranked parent and lower token index,
/// so width 1 reproduces [`greedy_search`] exactly.
pub fn beam_search<M: StepModel>(model: &M, beam_width: usize, max_len: usize) -> Hypothesis {
    let width = beam_width.max(1);
    let empty = Hypothesis { tokens: Vec::new(), log_prob: 0.0, finished: false };
    let mut alive: Vec<(Hypothesis, M::State)> = vec![(empty, model.start())];
    let mut done: Vec<Hypothesis> = Vec::new();

    for _ in 0..max_len {
        if alive.is_empty() {
            break;
        }
        let mut cands: Vec<(Hypothesis, usize)> = Vec::new();
        let mut states = Vec::with_capacity(alive.len());
        for (parent, (hyp, state)) in alive.iter().enumerate() {
            let prev = hyp.tokens.last().copied().unwrap_or(SOS);
            let (lp, next) = model.step(state, prev);
            states.push(next);
            for (tok, l) in lp.iter().enumerate() {
                if *l == f64::NEG_INFINITY {
                    continue;
                }
                let mut tokens = hyp.tokens.clone();
                tokens.push(tok);
                cands.push((Hypothesis { tokens, log_prob: hyp.log_prob + l, finished: tok == EOS }, parent));
            }
        }
        // Stable sort keeps parent-major, index-minor order among exact ties.
        cands.sort_by(|a, b| rank(&b.0, &a.0));
        cands.truncate(width);
        alive = Vec::with_capacity(width);
        for (hyp, parent) in cands {
            if hyp.finished {
                done.push(hyp);
            } else {
                alive.push((hyp, states[parent].clone()));
            }
        }
    }

    done.into_iter()
        .chain(alive.into_iter().map(|(h, _)| h))
        .reduce(|best, h| if rank(&h, &best) == Ordering::Greater { h } else { best })
        .unwrap_or(Hypothesis { tokens: Vec::new(), log_prob: 0.0, finished: false })
}

fn rank(a: &Hypothesis, b: &Hypothesis) -> Ordering {
    a.score()
        .partial_cmp(&b.score())
        .unwrap_or(Ordering::Equal)
        .then_with(|| a.log_prob.partial_cmp(&b.log_prob).unwrap_or(Ordering::Equal))
}

/// The trained network bound to one encoded source sequence.
pub struct BoundDecoder<'a, T> {
    params: &'a ModelParams<T>,
    enc: Encoded<T>,
}

impl<'a, T: Scalar> BoundDecoder<'a, T> {
    pub fn new(params: &'a ModelParams<T>, source: &[usize]) -> Result<Self, Seq2SeqError> {
        if source.is_empty() {
            return Err(Seq2SeqError::Input("empty source sequence".into()));
        }
        let vs = params.config.source_vocab;
        if let Some(&t) = source.iter().find(|&&t| t >= vs) {
            return Err(Seq2SeqError::Input(format!("source token {t} out of range (vocab {vs})")));
        }
        Ok(BoundDecoder { params, enc: params.encode(source) })
    }
}

impl<T: Scalar> StepModel for BoundDecoder<'_, T> {
    type State = Vec<T>;

    fn start(&self) -> Vec<T> {
        self.enc.initial_state().to_vec()
    }

    fn step(&self, state: &Vec<T>, prev: usize) -> (Vec<f64>, Vec<T>) {
        let step = self.params.decoder_step(&self.enc, state, prev);
        (step.log_probs().map(Scalar::f64).collect(), step.state().to_vec())
    }
}

/// Argmax decoding of `source` into text; SOS/EOS/PAD never appear in the result.
pub fn greedy_decode<T: Scalar>(
    params: &ModelParams<T>,
    vocab: &TokenVocab,
    source: &[usize],
    max_len: usize,
) -> Result<String, Seq2SeqError> {
    let model = BoundDecoder::new(params, source)?;
    Ok(vocab.decode_target(&greedy_search(&model, max_len).tokens))
}

pub fn beam_decode<T: Scalar>(
    params: &ModelParams<T>,
    vocab: &TokenVocab,
    source: &[usize],
    beam_width: usize,
    max_len: usize,
) -> Result<String, Seq2SeqError> {
    if beam_width == 0 {
        return Err(Seq2SeqError::Input("beam width must be at least 1".into()));
    }
    let model = BoundDecoder::new(params, source)?;
    Ok(vocab.decode_target(&beam_search(&model, beam_width, max_len).tokens))
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Fixed next-token table indexed by the previous token.
    struct Bigram(Vec<Vec<f64>>);

    impl StepModel for Bigram {
        type State = ();
        fn start(&self) {}
        fn step(&self, _: &(), prev: usize) -> (Vec<f64>, ()) {
            (self.0[prev].clone(), ())
        }
    }

    fn table(rows: &[[f64; 4]]) -> Bigram {
        Bigram(rows.iter().map(|r| r.iter().map(|p| p.ln()).collect()).collect())
    }

    #[test]
    fn greedy_follows_argmax_and_stops() {
        // tokens: 0 pad, 1 sos, 2 eos, 3 x
        let m = table(&[[0.0, 0.0, 1.0, 0.0], [0.0, 0.0, 0.4, 0.6], [0.0, 0.0, 1.0, 0.0], [0.0, 0.0, 0.7, 0.3]]);
        let h = greedy_search(&m, 10);
        assert_eq!(h.tokens, vec![3, EOS]);
        assert!(h.finished);
        assert!((h.log_prob - (0.6f64.ln() + 0.7f64.ln())).abs() < 1e-12);
        assert!(greedy_search(&m, 0).tokens.is_empty());
        assert_eq!(greedy_search(&m, 1).tokens, vec![3]);
    }

    #[test]
    fn beam_recovers_what_greedy_misses() {
        // tokens: 0 pad, 1 sos, 2 eos, 3 x, 4 y. Greedy commits to x and must
        // then pay for a weak EOS; y followed by a certain EOS scores better.
        let m = Bigram(
            [
                [0.0, 0.0, 1.0, 0.0, 0.0],
                [0.0, 0.0, 0.0, 0.55, 0.45],
                [0.0, 0.0, 1.0, 0.0, 0.0],
                [0.0, 0.0, 0.34, 0.33, 0.33],
                [0.0, 0.0, 1.0, 0.0, 0.0],
            ]
            .iter()
            .map(|r| r.iter().map(|p: &f64| p.ln()).collect())
            .collect(),
        );
        let g = greedy_search(&m, 10);
        assert_eq!(g.tokens, vec![3, EOS]);
        let b = beam_search(&m, 2, 10);
        assert_eq!(b.tokens, vec![4, EOS]);
        assert!(b.score() > g.score());
        assert_eq!(beam_search(&m, 1, 10), g);
    }
}
