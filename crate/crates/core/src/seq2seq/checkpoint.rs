//! Single-file binary checkpoints.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! "VDCK" | u32 version
//! u32 embed | u32 hidden | u32 layers | u32 attention | u32 |Vs| | u32 |Vt| | f64 init_scale | u64 seed
//! u32 n, n * str          source tokens
//! u32 n, n * str          target tokens
//! u32 n, n * (str name, u32 rows, u32 cols, rows*cols f32)
//! ```
//!
//! `str` is a u32 byte length followed by UTF-8.

use std::path::Path;

use super::decode::{beam_search, greedy_search, BoundDecoder};
use super::params::{ModelConfig, ModelParams};
use super::vocab::TokenVocab;
use super::Seq2SeqError;

const MAGIC: &[u8; 4] = b"VDCK";
pub const FORMAT_VERSION: u32 = 1;

/// Everything needed to decode: configuration, vocabularies and weights.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub vocab: TokenVocab,
    pub params: ModelParams<f32>,
}

impl Model {
    pub fn new(vocab: TokenVocab, params: ModelParams<f32>) -> Result<Model, Seq2SeqError> {
        if vocab.source_size() != params.config.source_vocab || vocab.target_size() != params.config.target_vocab {
            return Err(Seq2SeqError::Config("vocabulary sizes do not match the model".into()));
        }
        Ok(Model { vocab, params })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.params.config
    }

    /// Greedy decode from viseme token strings.
    pub fn greedy<S: AsRef<str>>(&self, visemes: &[S], max_len: usize) -> Result<String, Seq2SeqError> {
        let ids = self.vocab.encode_source(visemes)?;
        let model = BoundDecoder::new(&self.params, &ids)?;
        Ok(self.vocab.decode_target(&greedy_search(&model, max_len).tokens))
    }

    pub fn beam<S: AsRef<str>>(&self, visemes: &[S], width: usize, max_len: usize) -> Result<String, Seq2SeqError> {
        if width == 0 {
            return Err(Seq2SeqError::Input("beam width must be at least 1".into()));
        }
        let ids = self.vocab.encode_source(visemes)?;
        let model = BoundDecoder::new(&self.params, &ids)?;
        Ok(self.vocab.decode_target(&beam_search(&model, width, max_len).tokens))
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let c = &self.params.config;
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        put_u32(&mut out, FORMAT_VERSION);
        for d in [c.embed_dim, c.hidden_dim, c.encoder_layers, c.attention_dim, c.source_vocab, c.target_vocab] {
            put_u32(&mut out, d as u32);
        }
        out.extend_from_slice(&c.init_scale.to_le_bytes());
        out.extend_from_slice(&c.seed.to_le_bytes());
        for table in [self.vocab.source_tokens(), self.vocab.target_tokens()] {
            put_u32(&mut out, table.len() as u32);
            for t in table {
                put_str(&mut out, t);
            }
        }
        let tensors = self.params.tensors();
        put_u32(&mut out, tensors.len() as u32);
        for (name, t) in tensors {
            put_str(&mut out, &name);
            put_u32(&mut out, t.rows as u32);
            put_u32(&mut out, t.cols as u32);
            for v in &t.data {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Model, Seq2SeqError> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(4)? != MAGIC {
            return Err(Seq2SeqError::Checkpoint("bad magic".into()));
        }
        let version = r.u32()?;
        if version != FORMAT_VERSION {
            return Err(Seq2SeqError::VersionMismatch { found: version, expected: FORMAT_VERSION });
        }
        let mut dims = [0usize; 6];
        for d in &mut dims {
            *d = r.u32()? as usize;
        }
        let config = ModelConfig {
            embed_dim: dims[0],
            hidden_dim: dims[1],
            encoder_layers: dims[2],
            attention_dim: dims[3],
            source_vocab: dims[4],
            target_vocab: dims[5],
            init_scale: f64::from_le_bytes(r.array()?),
            seed: u64::from_le_bytes(r.array()?),
        };
        config.validate().map_err(|e| Seq2SeqError::Checkpoint(e.to_string()))?;
        let source = r.strings()?;
        let target = r.strings()?;
        let vocab = TokenVocab::from_parts(source, target).map_err(|e| Seq2SeqError::Checkpoint(e.to_string()))?;

        let mut params = ModelParams::zeros(&config);
        let count = r.u32()? as usize;
        let mut slots = params.tensors_mut();
        if count != slots.len() {
            return Err(Seq2SeqError::Checkpoint(format!("expected {} tensors, found {count}", slots.len())));
        }
        for (name, slot) in slots.iter_mut() {
            let found = r.string()?;
            let (rows, cols) = (r.u32()? as usize, r.u32()? as usize);
            if found != *name || rows != slot.rows || cols != slot.cols {
                return Err(Seq2SeqError::Checkpoint(format!(
                    "tensor {found} [{rows}x{cols}] where {name} [{}x{}] was expected",
                    slot.rows, slot.cols
                )));
            }
            for v in slot.data.iter_mut() {
                *v = f32::from_le_bytes(r.array()?);
            }
        }
        if r.pos != bytes.len() {
            return Err(Seq2SeqError::Checkpoint(format!("{} trailing bytes", bytes.len() - r.pos)));
        }
        drop(slots);
        if !params.is_finite() {
            return Err(Seq2SeqError::Checkpoint("non-finite parameter".into()));
        }
        Model::new(vocab, params).map_err(|e| Seq2SeqError::Checkpoint(e.to_string()))
    }
}

pub fn save_checkpoint(model: &Model, path: impl AsRef<Path>) -> Result<(), Seq2SeqError> {
    std::fs::write(path, model.to_bytes())?;
    Ok(())
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Model, Seq2SeqError> {
    Model::from_bytes(&std::fs::read(path)?)
}

fn put_u32(out: &mut Vec<u8>, v: u32) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn put_str(out: &mut Vec<u8>, s: &str) {
    put_u32(out, s.len() as u32);
    out.extend_from_slice(s.as_bytes());
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], Seq2SeqError> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| Seq2SeqError::Checkpoint(format!("truncated at byte {}", self.bytes.len())))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn array<const N: usize>(&mut self) -> Result<[u8; N], Seq2SeqError> {
        Ok(self.take(N)?.try_into().expect("length checked"))
    }

    fn u32(&mut self) -> Result<u32, Seq2SeqError> {
        Ok(u32::from_le_bytes(self.array()?))
    }

    fn string(&mut self) -> Result<String, Seq2SeqError> {
        let n = self.u32()? as usize;
        String::from_utf8(self.take(n)?.to_vec()).map_err(|_| Seq2SeqError::Checkpoint("invalid UTF-8".into()))
    }

    fn strings(&mut self) -> Result<Vec<String>, Seq2SeqError> {
        let n = self.u32()? as usize;
        (0..n).map(|_| self.string()).collect()
    }
}
