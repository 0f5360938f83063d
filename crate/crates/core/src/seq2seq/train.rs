//! Mini-batch Adam training with global-norm clipping.

use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::decode::{default_max_len, greedy_search, BoundDecoder};
use super::model::{Feed, Pair};
use super::params::{ModelParams, Scalar};
use super::vocab::TokenVocab;
use super::Seq2SeqError;
use crate::metrics::corpus_error_rates;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Precision {
    /// 32-bit floats.
    Standard,
    /// 64-bit floats throughout, cast back to 32 bits at the end.
    Verification,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    /// Probability of feeding the gold previous token; 1.0 is full teacher forcing.
    pub teacher_forcing: f64,
    /// Global gradient-norm ceiling; non-positive disables clipping.
    pub clip_norm: f64,
    pub seed: u64,
    pub precision: Precision,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 1e-3,
            batch_size: 16,
            epochs: 10,
            teacher_forcing: 1.0,
            clip_norm: 5.0,
            seed: 0,
            precision: Precision::Standard,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), Seq2SeqError> {
        // Zero is allowed: it is a useful no-op run.
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Seq2SeqError::Config("learning rate must be finite and non-negative".into()));
        }
        if self.batch_size == 0 {
            return Err(Seq2SeqError::Config("batch size must be at least 1".into()));
        }
        if !(0.0..=1.0).contains(&self.teacher_forcing) {
            return Err(Seq2SeqError::Config("teacher-forcing ratio must be in [0, 1]".into()));
        }
        if self.clip_norm.is_nan() {
            return Err(Seq2SeqError::Config("clip norm is NaN".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochRecord {
    /// 1-based.
    pub epoch: usize,
    /// Token-weighted mean cross-entropy over the epoch's batches.
    pub train_loss: f64,
    /// Greedy-decode CER on the validation pairs, if any were given.
    pub valid_cer: Option<f64>,
    pub wall_seconds: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub params: ModelParams<f32>,
    pub log: Vec<EpochRecord>,
    /// Epoch whose parameters were returned (0 if no epoch ran).
    pub best_epoch: usize,
}

const BETA1: f64 = 0.9;
const BETA2: f64 = 0.999;
const EPS: f64 = 1e-8;

struct Adam<T> {
    m: ModelParams<T>,
    v: ModelParams<T>,
    t: i32,
}

impl<T: Scalar> Adam<T> {
    fn new(like: &ModelParams<T>) -> Self {
        Adam { m: ModelParams::zeros(&like.config), v: ModelParams::zeros(&like.config), t: 0 }
    }

    fn step(&mut self, params: &mut ModelParams<T>, grads: &ModelParams<T>, lr: f64) {
        self.t += 1;
        let (b1, b2) = (T::of(BETA1), T::of(BETA2));
        let c1 = T::of(1.0 - BETA1.powi(self.t));
        let c2 = T::of(1.0 - BETA2.powi(self.t));
        let (lr, eps, one) = (T::of(lr), T::of(EPS), T::one());
        let tensors = params.tensors_mut().into_iter().zip(grads.tensors());
        let moments = self.m.tensors_mut().into_iter().zip(self.v.tensors_mut());
        for ((p, g), (m, v)) in tensors.zip(moments) {
            let it = p.1.data.iter_mut().zip(&g.1.data).zip(m.1.data.iter_mut().zip(v.1.data.iter_mut()));
            for ((p, g), (m, v)) in it {
                *m = b1 * *m + (one - b1) * *g;
                *v = b2 * *v + (one - b2) * *g * *g;
                *p -= lr * (*m / c1) / ((*v / c2).sqrt() + eps);
            }
        }
    }
}

/// Greedy-decode CER of `pairs` (targets decoded back to text as references).
pub(crate) fn decode_cer<T: Scalar>(
    params: &ModelParams<T>,
    vocab: &TokenVocab,
    pairs: &[Pair],
) -> Result<f64, Seq2SeqError> {
    let mut rows = Vec::with_capacity(pairs.len());
    for p in pairs {
        let model = BoundDecoder::new(params, &p.source)?;
        let hyp = greedy_search(&model, default_max_len(p.source.len()));
        rows.push((vocab.decode_target(&p.target), vocab.decode_target(&hyp.tokens)));
    }
    corpus_error_rates(&rows)
        .map(|r| r.cer)
        .map_err(|e| Seq2SeqError::Degenerate(e.to_string()))
}

/// Trains from `initial` and returns the parameters of the epoch with the
/// lowest validation CER (earliest on ties), or of the final epoch when
/// `valid` is empty.
pub fn train(
    initial: &ModelParams<f32>,
    vocab: &TokenVocab,
    train_pairs: &[Pair],
    valid: &[Pair],
    config: &TrainConfig,
) -> Result<TrainOutcome, Seq2SeqError> {
    train_with_callback(initial, vocab, train_pairs, valid, config, |_, _| true)
}

/// As [`train`], calling `on_epoch` after every epoch with the record and the
/// current parameters. Returning `false` stops training early.
pub fn train_with_callback<F>(
    initial: &ModelParams<f32>,
    vocab: &TokenVocab,
    train_pairs: &[Pair],
    valid: &[Pair],
    config: &TrainConfig,
    mut on_epoch: F,
) -> Result<TrainOutcome, Seq2SeqError>
where
    F: FnMut(&EpochRecord, &ModelParams<f32>) -> bool,
{
    config.validate()?;
    if train_pairs.is_empty() {
        return Err(Seq2SeqError::Degenerate("training split is empty".into()));
    }
    if vocab.source_size() != initial.config.source_vocab || vocab.target_size() != initial.config.target_vocab {
        return Err(Seq2SeqError::Config("vocabulary sizes do not match the model".into()));
    }
    for p in train_pairs.iter().chain(valid) {
        initial.validate_pair(p)?;
    }
    match config.precision {
        Precision::Standard => run(initial.clone(), vocab, train_pairs, valid, config, |r, p| on_epoch(r, p)),
        Precision::Verification => {
            let out = run(initial.cast::<f64>(), vocab, train_pairs, valid, config, |r, p| {
                on_epoch(r, &p.cast::<f32>())
            })?;
            Ok(out)
        }
    }
}

fn run<T: Scalar, F>(
    mut params: ModelParams<T>,
    vocab: &TokenVocab,
    train_pairs: &[Pair],
    valid: &[Pair],
    config: &TrainConfig,
    mut on_epoch: F,
) -> Result<TrainOutcome, Seq2SeqError>
where
    F: FnMut(&EpochRecord, &ModelParams<T>) -> bool,
{
    let mut order_rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut feed_rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x5eed_f00d);
    let mut adam = Adam::new(&params);
    let mut grads = ModelParams::zeros(&params.config);
    let mut order: Vec<usize> = (0..train_pairs.len()).collect();
    let mut log = Vec::with_capacity(config.epochs);
    let mut best: Option<(f64, usize, ModelParams<T>)> = None;
    let mut batch: Vec<Pair> = Vec::with_capacity(config.batch_size);

    for epoch in 1..=config.epochs {
        let started = Instant::now();
        order.shuffle(&mut order_rng);
        let (mut loss_sum, mut token_sum) = (0.0f64, 0usize);
        for (b, chunk) in order.chunks(config.batch_size).enumerate() {
            batch.clear();
            batch.extend(chunk.iter().map(|&i| train_pairs[i].clone()));
            grads.scale(T::zero());
            let mut feed = if config.teacher_forcing >= 1.0 {
                Feed::Teacher
            } else {
                Feed::Mixed { ratio: config.teacher_forcing, rng: &mut feed_rng }
            };
            let (loss, tokens) = match params.accumulate(&batch, &mut feed, Some(&mut grads)) {
                Ok(v) => v,
                Err(Seq2SeqError::Numeric(_)) => return Err(Seq2SeqError::Diverged { epoch, batch: b }),
                Err(e) => return Err(e),
            };
            if config.clip_norm > 0.0 {
                let norm = grads.global_norm();
                if !norm.is_finite() {
                    return Err(Seq2SeqError::Diverged { epoch, batch: b });
                }
                if norm > config.clip_norm {
                    grads.scale(T::of(config.clip_norm / norm));
                }
            }
            adam.step(&mut params, &grads, config.learning_rate);
            loss_sum += loss.f64() * tokens as f64;
            token_sum += tokens;
        }
        let valid_cer = if valid.is_empty() { None } else { Some(decode_cer(&params, vocab, valid)?) };
        let record = EpochRecord {
            epoch,
            train_loss: loss_sum / token_sum as f64,
            valid_cer,
            wall_seconds: started.elapsed().as_secs_f64(),
        };
        let keep_going = on_epoch(&record, &params);
        let cer = valid_cer.unwrap_or(f64::NEG_INFINITY);
        let improved = match &best {
            None => true,
            Some((b, _, _)) => valid_cer.is_none() || cer < *b,
        };
        if improved {
            best = Some((cer, epoch, params.clone()));
        }
        log.push(record);
        if !keep_going {
            break;
        }
    }

    let (best_epoch, params) = match best {
        Some((_, e, p)) => (e, p),
        None => (0, params),
    };
    Ok(TrainOutcome { params: params.cast::<f32>(), log, best_epoch })
}
