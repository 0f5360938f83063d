//! Flat `key = value` experiment configuration.
//!
//! ```text
//! # inputs; relative paths resolve against the config file's directory
//! corpus = toy-corpus.txt
//! dictionary = bundled
//! mapping = bundled
//! output_dir = out
//!
//! seed = 1
//! split = 0.8, 0.1, 0.1
//! hidden_dim = 64
//! epochs = 40
//! decode = beam
//! beam_width = 4
//! noise = 0.0
//! ```
//!
//! Every key except `corpus` is optional. Unknown and repeated keys are errors.

use std::collections::HashMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use lipdec::seq2seq::{ModelConfig, Precision, TrainConfig};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("unknown key {0:?}")]
    UnknownKey(String),
    #[error("missing required key {0:?}")]
    Missing(&'static str),
    #[error("invalid value for {key}: {message}")]
    Invalid { key: &'static str, message: String },
    #[error("{what} not found: {}", path.display())]
    InputMissing { what: &'static str, path: PathBuf },
    #[error("cannot read config {}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
}

/// A dictionary or mapping source: the copy compiled into the library, or a file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Asset {
    Bundled,
    File(PathBuf),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DecodeMode {
    Greedy,
    Beam,
}

impl fmt::Display for DecodeMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DecodeMode::Greedy => "greedy",
            DecodeMode::Beam => "beam",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelSettings {
    pub embed_dim: usize,
    pub hidden_dim: usize,
    pub encoder_layers: usize,
    pub attention_dim: usize,
    pub init_scale: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub corpus: PathBuf,
    pub dictionary: Asset,
    pub mapping: Asset,
    pub output_dir: PathBuf,
    /// Keep at most this many sentences after filtering (seeded sample).
    pub sample_size: Option<usize>,
    /// Master seed for sampling, splitting, initialization, training and noise.
    pub seed: u64,
    pub split: [f64; 3],
    pub boundaries: bool,
    pub model: ModelSettings,
    pub train: TrainConfig,
    pub decode: DecodeMode,
    pub beam_width: usize,
    /// Output budget per sentence; `None` uses three times the source length plus ten.
    pub max_len: Option<usize>,
    /// Viseme substitution rate applied to evaluation inputs.
    pub noise: f64,
    /// Rows in the ground-truth/predicted sample table.
    pub sample_rows: usize,
}

const KEYS: &[&str] = &[
    "corpus",
    "dictionary",
    "mapping",
    "output_dir",
    "sample_size",
    "seed",
    "split",
    "boundaries",
    "embed_dim",
    "hidden_dim",
    "encoder_layers",
    "attention_dim",
    "init_scale",
    "learning_rate",
    "batch_size",
    "epochs",
    "teacher_forcing",
    "clip_norm",
    "precision",
    "decode",
    "beam_width",
    "max_len",
    "noise",
    "sample_rows",
];

struct Entries {
    map: HashMap<String, String>,
}

impl Entries {
    fn get<T: FromStr>(&self, key: &'static str, default: T) -> Result<T, ConfigError>
    where
        T::Err: fmt::Display,
    {
        match self.map.get(key) {
            None => Ok(default),
            Some(v) => v.parse().map_err(|e: T::Err| ConfigError::Invalid { key, message: format!("{v:?}: {e}") }),
        }
    }

    fn raw(&self, key: &str) -> Option<&str> {
        self.map.get(key).map(String::as_str)
    }
}

fn invalid(key: &'static str, message: impl Into<String>) -> ConfigError {
    ConfigError::Invalid { key, message: message.into() }
}

fn resolve(base: &Path, value: &str) -> PathBuf {
    let p = Path::new(value);
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

impl ExperimentConfig {
    pub fn from_file(path: impl AsRef<Path>) -> Result<ExperimentConfig, ConfigError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.into(), source })?;
        let base = path.parent().unwrap_or(Path::new("."));
        ExperimentConfig::parse_str(&text, base)
    }

    /// Parses and validates; relative paths resolve against `base_dir`.
    pub fn parse_str(text: &str, base_dir: &Path) -> Result<ExperimentConfig, ConfigError> {
        let mut map = HashMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| ConfigError::Syntax { line: i + 1, message: "expected key = value".into() })?;
            let (k, v) = (k.trim(), v.trim());
            if !KEYS.contains(&k) {
                return Err(ConfigError::UnknownKey(k.to_string()));
            }
            if map.insert(k.to_string(), v.to_string()).is_some() {
                return Err(ConfigError::Syntax { line: i + 1, message: format!("key {k:?} repeated") });
            }
        }
        let e = Entries { map };

        let corpus = resolve(base_dir, e.raw("corpus").ok_or(ConfigError::Missing("corpus"))?);
        let asset = |key: &str| match e.raw(key) {
            None | Some("bundled") => Asset::Bundled,
            Some(p) => Asset::File(resolve(base_dir, p)),
        };
        let split = match e.raw("split") {
            None => [0.8, 0.1, 0.1],
            Some(v) => {
                let parts: Vec<f64> = v
                    .split(',')
                    .map(|p| p.trim().parse::<f64>())
                    .collect::<Result<_, _>>()
                    .map_err(|err| invalid("split", format!("{v:?}: {err}")))?;
                <[f64; 3]>::try_from(parts).map_err(|_| invalid("split", "expected three comma-separated ratios"))?
            }
        };
        let decode = match e.raw("decode").unwrap_or("greedy") {
            "greedy" => DecodeMode::Greedy,
            "beam" => DecodeMode::Beam,
            other => return Err(invalid("decode", format!("{other:?} is not greedy or beam"))),
        };
        let precision = match e.raw("precision").unwrap_or("standard") {
            "standard" => Precision::Standard,
            "verification" => Precision::Verification,
            other => return Err(invalid("precision", format!("{other:?} is not standard or verification"))),
        };
        let seed = e.get("seed", 1u64)?;
        let defaults = TrainConfig::default();
        let config = ExperimentConfig {
            corpus,
            dictionary: asset("dictionary"),
            mapping: asset("mapping"),
            output_dir: resolve(base_dir, e.raw("output_dir").unwrap_or("out")),
            sample_size: match e.get("sample_size", 0usize)? {
                0 => None,
                n => Some(n),
            },
            seed,
            split,
            boundaries: e.get("boundaries", true)?,
            model: ModelSettings {
                embed_dim: e.get("embed_dim", 32)?,
                hidden_dim: e.get("hidden_dim", 128)?,
                encoder_layers: e.get("encoder_layers", 2)?,
                attention_dim: e.get("attention_dim", 64)?,
                init_scale: e.get("init_scale", 1.0)?,
            },
            train: TrainConfig {
                learning_rate: e.get("learning_rate", defaults.learning_rate)?,
                batch_size: e.get("batch_size", defaults.batch_size)?,
                epochs: e.get("epochs", defaults.epochs)?,
                teacher_forcing: e.get("teacher_forcing", defaults.teacher_forcing)?,
                clip_norm: e.get("clip_norm", defaults.clip_norm)?,
                seed,
                precision,
            },
            decode,
            beam_width: e.get("beam_width", 4)?,
            max_len: match e.get("max_len", 0usize)? {
                0 => None,
                n => Some(n),
            },
            noise: e.get("noise", 0.0)?,
            sample_rows: e.get("sample_rows", 10)?,
        };
        config.validate()?;
        Ok(config)
    }

    /// Range checks that need no filesystem access.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let ratios_ok = self.split.iter().all(|r| r.is_finite() && *r >= 0.0)
            && (self.split.iter().sum::<f64>() - 1.0).abs() <= 1e-9;
        if !ratios_ok {
            return Err(invalid("split", format!("ratios {:?} must be non-negative and sum to 1", self.split)));
        }
        if !(0.0..=1.0).contains(&self.noise) {
            return Err(invalid("noise", "must be in [0, 1]"));
        }
        if self.beam_width == 0 {
            return Err(invalid("beam_width", "must be at least 1"));
        }
        self.model_config(1, 1).validate().map_err(|e| invalid("model", e.to_string()))?;
        self.train.validate().map_err(|e| invalid("train", e.to_string()))?;
        Ok(())
    }

    /// Checks that input files exist; run before any stage writes output.
    pub fn check_inputs(&self) -> Result<(), ConfigError> {
        let mut inputs = vec![("corpus", &self.corpus)];
        if let Asset::File(p) = &self.dictionary {
            inputs.push(("dictionary", p));
        }
        if let Asset::File(p) = &self.mapping {
            inputs.push(("mapping", p));
        }
        for (what, path) in inputs {
            if !path.is_file() {
                return Err(ConfigError::InputMissing { what, path: path.clone() });
            }
        }
        Ok(())
    }

    pub fn with_seed(mut self, seed: u64) -> ExperimentConfig {
        self.seed = seed;
        self.train.seed = seed;
        self
    }

    pub fn model_config(&self, source_vocab: usize, target_vocab: usize) -> ModelConfig {
        ModelConfig {
            embed_dim: self.model.embed_dim,
            hidden_dim: self.model.hidden_dim,
            encoder_layers: self.model.encoder_layers,
            attention_dim: self.model.attention_dim,
            source_vocab,
            target_vocab,
            init_scale: self.model.init_scale,
            seed: self.seed,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<ExperimentConfig, ConfigError> {
        ExperimentConfig::parse_str(text, Path::new("/base"))
    }

    #[test]
    fn defaults_and_relative_paths() {
        let c = parse("corpus = data/c.txt\n# comment\n\nmapping = m.tsv  # trailing\n").unwrap();
        assert_eq!(c.corpus, PathBuf::from("/base/data/c.txt"));
        assert_eq!(c.mapping, Asset::File("/base/m.tsv".into()));
        assert_eq!(c.dictionary, Asset::Bundled);
        assert_eq!(c.output_dir, PathBuf::from("/base/out"));
        assert_eq!(c.split, [0.8, 0.1, 0.1]);
        assert_eq!(c.decode, DecodeMode::Greedy);
        assert_eq!(c.train.seed, c.seed);
    }

    #[test]
    fn split_must_sum_to_one() {
        let err = parse("corpus = c\nsplit = 0.7, 0.1, 0.1\n").unwrap_err();
        assert!(matches!(err, ConfigError::Invalid { key: "split", .. }), "{err}");
        assert!(parse("corpus = c\nsplit = 0.5, 0.5\n").is_err());
    }

    #[test]
    fn rejects_bad_input() {
        assert!(matches!(parse("seed = 1\n"), Err(ConfigError::Missing("corpus"))));
        assert!(matches!(parse("corpus = c\ncolour = red\n"), Err(ConfigError::UnknownKey(_))));
        assert!(matches!(parse("corpus = c\ncorpus = d\n"), Err(ConfigError::Syntax { line: 2, .. })));
        assert!(matches!(parse("corpus\n"), Err(ConfigError::Syntax { line: 1, .. })));
        assert!(matches!(parse("corpus = c\nnoise = 1.5\n"), Err(ConfigError::Invalid { key: "noise", .. })));
        assert!(matches!(parse("corpus = c\nhidden_dim = x\n"), Err(ConfigError::Invalid { .. })));
        assert!(matches!(parse("corpus = c\nhidden_dim = 0\n"), Err(ConfigError::Invalid { .. })));
        assert!(matches!(parse("corpus = c\ndecode = sample\n"), Err(ConfigError::Invalid { .. })));
    }

    #[test]
    fn seed_override_reaches_training() {
        let c = parse("corpus = c\nseed = 3\n").unwrap().with_seed(9);
        assert_eq!((c.seed, c.train.seed, c.model_config(2, 3).seed), (9, 9, 9));
    }

    #[test]
    fn missing_inputs_are_reported() {
        let c = parse("corpus = /definitely/not/here.txt\n").unwrap();
        assert!(matches!(c.check_inputs(), Err(ConfigError::InputMissing { what: "corpus", .. })));
    }
}
