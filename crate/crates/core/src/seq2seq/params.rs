use std::fmt::{Debug, Display};
use std::iter::Sum;
use std::ops::{AddAssign, MulAssign, SubAssign};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::Seq2SeqError;

/// Floating point type the model runs in: `f32` for training, `f64` for
/// gradient verification.
pub trait Scalar:
    num_traits::Float
    + num_traits::FromPrimitive
    + AddAssign
    + SubAssign
    + MulAssign
    + Sum
    + Debug
    + Display
    + Default
    + Send
    + Sync
    + 'static
{
    fn of(v: f64) -> Self {
        Self::from_f64(v).expect("finite literal")
    }

    fn f64(self) -> f64 {
        num_traits::ToPrimitive::to_f64(&self).unwrap_or(f64::NAN)
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    pub embed_dim: usize,
    pub hidden_dim: usize,
    pub encoder_layers: usize,
    pub attention_dim: usize,
    pub source_vocab: usize,
    pub target_vocab: usize,
    pub init_scale: f64,
    pub seed: u64,
}

impl ModelConfig {
    /// Desk-scale defaults; the reference setup used `hidden_dim = 1024`.
    pub fn new(source_vocab: usize, target_vocab: usize) -> ModelConfig {
        ModelConfig {
            embed_dim: 32,
            hidden_dim: 128,
            encoder_layers: 2,
            attention_dim: 64,
            source_vocab,
            target_vocab,
            init_scale: 1.0,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<(), Seq2SeqError> {
        let dims = [
            ("embed_dim", self.embed_dim),
            ("hidden_dim", self.hidden_dim),
            ("encoder_layers", self.encoder_layers),
            ("attention_dim", self.attention_dim),
            ("source_vocab", self.source_vocab),
            ("target_vocab", self.target_vocab),
        ];
        if let Some((name, _)) = dims.iter().find(|(_, v)| *v == 0) {
            return Err(Seq2SeqError::Config(format!("{name} must be at least 1")));
        }
        if !(self.init_scale.is_finite() && self.init_scale >= 0.0) {
            return Err(Seq2SeqError::Config("init_scale must be finite and non-negative".into()));
        }
        Ok(())
    }
}

/// Row-major matrix; vectors are stored with `cols == 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<T> {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<T>,
}

impl<T: Scalar> Tensor<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Tensor { rows, cols, data: vec![T::zero(); rows * cols] }
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[T] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, r: usize) -> &mut [T] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    fn cast<U: Scalar>(&self) -> Tensor<U> {
        Tensor { rows: self.rows, cols: self.cols, data: self.data.iter().map(|v| U::of(v.f64())).collect() }
    }
}

/// One GRU layer, gates stacked as reset, update, candidate (3H rows).
#[derive(Debug, Clone, PartialEq)]
pub struct GruWeights<T> {
    pub w_ih: Tensor<T>,
    pub w_hh: Tensor<T>,
    pub b_ih: Tensor<T>,
    pub b_hh: Tensor<T>,
}

impl<T: Scalar> GruWeights<T> {
    fn zeros(input: usize, hidden: usize) -> Self {
        GruWeights {
            w_ih: Tensor::zeros(3 * hidden, input),
            w_hh: Tensor::zeros(3 * hidden, hidden),
            b_ih: Tensor::zeros(3 * hidden, 1),
            b_hh: Tensor::zeros(3 * hidden, 1),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.w_ih.cols
    }

    pub fn hidden_dim(&self) -> usize {
        self.w_hh.cols
    }
}

/// Every tensor of the encoder-attention-decoder model.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams<T> {
    pub config: ModelConfig,
    pub src_embed: Tensor<T>,
    pub tgt_embed: Tensor<T>,
    pub encoder: Vec<GruWeights<T>>,
    /// Projects the last top-layer encoder state to the initial decoder state.
    pub bridge_w: Tensor<T>,
    pub bridge_b: Tensor<T>,
    /// Input is the previous target embedding concatenated with the context.
    pub decoder: GruWeights<T>,
    pub att_query: Tensor<T>,
    pub att_key: Tensor<T>,
    pub att_bias: Tensor<T>,
    pub att_score: Tensor<T>,
    /// Input is the new decoder state concatenated with the context.
    pub out_w: Tensor<T>,
    pub out_b: Tensor<T>,
}

impl<T: Scalar> ModelParams<T> {
    /// All-zero parameters with the shapes `config` implies.
    pub fn zeros(config: &ModelConfig) -> Self {
        let (e, h, a) = (config.embed_dim, config.hidden_dim, config.attention_dim);
        let encoder = (0..config.encoder_layers)
            .map(|l| GruWeights::zeros(if l == 0 { e } else { h }, h))
            .collect();
        ModelParams {
            config: config.clone(),
            src_embed: Tensor::zeros(config.source_vocab, e),
            tgt_embed: Tensor::zeros(config.target_vocab, e),
            encoder,
            bridge_w: Tensor::zeros(h, h),
            bridge_b: Tensor::zeros(h, 1),
            decoder: GruWeights::zeros(e + h, h),
            att_query: Tensor::zeros(a, h),
            att_key: Tensor::zeros(a, h),
            att_bias: Tensor::zeros(a, 1),
            att_score: Tensor::zeros(a, 1),
            out_w: Tensor::zeros(config.target_vocab, 2 * h),
            out_b: Tensor::zeros(config.target_vocab, 1),
        }
    }

    /// Seeded init: matrices uniform in `±init_scale / sqrt(cols)`, biases
    /// (single-column tensors) zero. The attention score vector counts as a
    /// weight and uses `±init_scale / sqrt(attention_dim)`.
    pub fn init(config: &ModelConfig) -> Result<Self, Seq2SeqError> {
        config.validate()?;
        let mut params = ModelParams::zeros(config);
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let attention_dim = config.attention_dim;
        for (name, t) in params.tensors_mut() {
            let fan_in = if name == "att.score" {
                attention_dim
            } else if t.cols == 1 {
                continue;
            } else {
                t.cols
            };
            let bound = config.init_scale / (fan_in as f64).sqrt();
            for v in &mut t.data {
                *v = if bound > 0.0 { T::of(rng.gen_range(-bound..bound)) } else { T::zero() };
            }
        }
        Ok(params)
    }

    /// Named tensors in a fixed order (also the checkpoint order).
    pub fn tensors(&self) -> Vec<(String, &Tensor<T>)> {
        let mut out = vec![("src_embed".to_string(), &self.src_embed), ("tgt_embed".to_string(), &self.tgt_embed)];
        for (l, g) in self.encoder.iter().enumerate() {
            out.push((format!("enc{l}.w_ih"), &g.w_ih));
            out.push((format!("enc{l}.w_hh"), &g.w_hh));
            out.push((format!("enc{l}.b_ih"), &g.b_ih));
            out.push((format!("enc{l}.b_hh"), &g.b_hh));
        }
        out.extend([
            ("bridge.w".to_string(), &self.bridge_w),
            ("bridge.b".to_string(), &self.bridge_b),
            ("dec.w_ih".to_string(), &self.decoder.w_ih),
            ("dec.w_hh".to_string(), &self.decoder.w_hh),
            ("dec.b_ih".to_string(), &self.decoder.b_ih),
            ("dec.b_hh".to_string(), &self.decoder.b_hh),
            ("att.query".to_string(), &self.att_query),
            ("att.key".to_string(), &self.att_key),
            ("att.bias".to_string(), &self.att_bias),
            ("att.score".to_string(), &self.att_score),
            ("out.w".to_string(), &self.out_w),
            ("out.b".to_string(), &self.out_b),
        ]);
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<(String, &mut Tensor<T>)> {
        let mut out = vec![
            ("src_embed".to_string(), &mut self.src_embed),
            ("tgt_embed".to_string(), &mut self.tgt_embed),
        ];
        for (l, g) in self.encoder.iter_mut().enumerate() {
            out.push((format!("enc{l}.w_ih"), &mut g.w_ih));
            out.push((format!("enc{l}.w_hh"), &mut g.w_hh));
            out.push((format!("enc{l}.b_ih"), &mut g.b_ih));
            out.push((format!("enc{l}.b_hh"), &mut g.b_hh));
        }
        out.extend([
            ("bridge.w".to_string(), &mut self.bridge_w),
            ("bridge.b".to_string(), &mut self.bridge_b),
            ("dec.w_ih".to_string(), &mut self.decoder.w_ih),
            ("dec.w_hh".to_string(), &mut self.decoder.w_hh),
            ("dec.b_ih".to_string(), &mut self.decoder.b_ih),
            ("dec.b_hh".to_string(), &mut self.decoder.b_hh),
            ("att.query".to_string(), &mut self.att_query),
            ("att.key".to_string(), &mut self.att_key),
            ("att.bias".to_string(), &mut self.att_bias),
            ("att.score".to_string(), &mut self.att_score),
            ("out.w".to_string(), &mut self.out_w),
            ("out.b".to_string(), &mut self.out_b),
        ]);
        out
    }

    pub fn num_parameters(&self) -> usize {
        self.tensors().iter().map(|(_, t)| t.len()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|(_, t)| t.data.iter().all(|v| v.is_finite()))
    }

    pub fn cast<U: Scalar>(&self) -> ModelParams<U> {
        ModelParams {
            config: self.config.clone(),
            src_embed: self.src_embed.cast(),
            tgt_embed: self.tgt_embed.cast(),
            encoder: self
                .encoder
                .iter()
                .map(|g| GruWeights { w_ih: g.w_ih.cast(), w_hh: g.w_hh.cast(), b_ih: g.b_ih.cast(), b_hh: g.b_hh.cast() })
                .collect(),
            bridge_w: self.bridge_w.cast(),
            bridge_b: self.bridge_b.cast(),
            decoder: GruWeights {
                w_ih: self.decoder.w_ih.cast(),
                w_hh: self.decoder.w_hh.cast(),
                b_ih: self.decoder.b_ih.cast(),
                b_hh: self.decoder.b_hh.cast(),
            },
            att_query: self.att_query.cast(),
            att_key: self.att_key.cast(),
            att_bias: self.att_bias.cast(),
            att_score: self.att_score.cast(),
            out_w: self.out_w.cast(),
            out_b: self.out_b.cast(),
        }
    }

    /// Euclidean norm over every parameter, accumulated in f64.
    pub fn global_norm(&self) -> f64 {
        self.tensors()
            .iter()
            .flat_map(|(_, t)| t.data.iter())
            .map(|v| v.f64() * v.f64())
            .sum::<f64>()
            .sqrt()
    }

    pub fn scale(&mut self, factor: T) {
        for (_, t) in self.tensors_mut() {
            t.data.iter_mut().for_each(|v| *v *= factor);
        }
    }
}
