//! Stage runner. Every stage reads its inputs from the config or from earlier
//! artifacts in the output directory, so stages can be re-run one at a time.
//!
//! | stage    | writes                                              |
//! |----------|-----------------------------------------------------|
//! | prepare  | `parallel.tsv`, `vocab.tsv`                         |
//! | analyze  | `lower_bound.txt`, `ambiguity.txt`                  |
//! | train    | `model.ckpt`, `train_log.tsv`, `train_timing.tsv`   |
//! | evaluate | `eval.txt`, `samples.txt`                           |
//!
//! `train_timing.tsv` holds wall-clock seconds and is the only output that
//! differs between identical runs.

use std::fmt;
use std::fs::File;
use std::hash::{DefaultHasher, Hash, Hasher};
use std::io::BufReader;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use lipdec::analysis::{ambiguity_report, greedy_lower_bound, group_homovisemes, AnalysisError};
use lipdec::corpus::{CorpusError, ParallelCorpus, ParallelExample, Split, TextCorpus, VocabStats};
use lipdec::lexicon::{Lexicon, LexiconError, VisemeMapping, WORD_BOUNDARY};
use lipdec::metrics::{corpus_error_rates, EvalReport, MetricsError};
use lipdec::seq2seq::{
    default_max_len, save_checkpoint, train_with_callback, Model, ModelParams, Pair,
    Seq2SeqError, TokenVocab,
};

use crate::config::{Asset, ConfigError, DecodeMode, ExperimentConfig};
use crate::noise::{inject_with_rng, NoiseError};

pub const PARALLEL: &str = "parallel.tsv";
pub const VOCAB: &str = "vocab.tsv";
pub const LOWER_BOUND: &str = "lower_bound.txt";
pub const AMBIGUITY: &str = "ambiguity.txt";
pub const CHECKPOINT: &str = "model.ckpt";
pub const TRAIN_LOG: &str = "train_log.tsv";
pub const TRAIN_TIMING: &str = "train_timing.tsv";
pub const EVAL: &str = "eval.txt";
pub const SAMPLES: &str = "samples.txt";

/// Seed offset for the evaluation noise stream, so it does not replay the
/// split or initialization streams.
const NOISE_STREAM: u64 = 0x6e6f_6973_65;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Prepare,
    Analyze,
    Train,
    Evaluate,
    All,
}

impl Stage {
    fn expand(self) -> &'static [Stage] {
        match self {
            Stage::All => &[Stage::Prepare, Stage::Analyze, Stage::Train, Stage::Evaluate],
            Stage::Prepare => &[Stage::Prepare],
            Stage::Analyze => &[Stage::Analyze],
            Stage::Train => &[Stage::Train],
            Stage::Evaluate => &[Stage::Evaluate],
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Stage::Prepare => "prepare",
            Stage::Analyze => "analyze",
            Stage::Train => "train",
            Stage::Evaluate => "evaluate",
            Stage::All => "all",
        })
    }
}

impl FromStr for Stage {
    type Err = String;

    fn from_str(s: &str) -> Result<Stage, String> {
        match s {
            "prepare" => Ok(Stage::Prepare),
            "analyze" => Ok(Stage::Analyze),
            "train" => Ok(Stage::Train),
            "evaluate" => Ok(Stage::Evaluate),
            "all" => Ok(Stage::All),
            other => Err(format!("unknown stage {other:?}")),
        }
    }
}

#[derive(Debug, Error)]
pub enum StageError {
    #[error(transparent)]
    Lexicon(#[from] LexiconError),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Analysis(#[from] AnalysisError),
    #[error(transparent)]
    Model(#[from] Seq2SeqError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Noise(#[from] NoiseError),
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
    #[error("no sentences left after normalization and dictionary filtering")]
    EmptyCorpus,
    #[error("the {0} split is empty")]
    EmptySplit(Split),
    #[error("input line has no viseme tokens")]
    EmptyInput,
}

#[derive(Debug, Error)]
pub enum RunError {
    #[error("config error: {0}")]
    Config(#[from] ConfigError),
    #[error("stage {stage} failed: {source}")]
    Stage { stage: Stage, source: StageError },
    #[error("decode failed: {0}")]
    Decode(StageError),
}

impl RunError {
    /// 1 for validation problems, 2 for failures while running.
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Config(_) => 1,
            RunError::Stage { .. } | RunError::Decode(_) => 2,
        }
    }
}

/// Headline numbers from the stages that ran.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunSummary {
    pub examples: Option<usize>,
    pub wer_lb: Option<f64>,
    pub final_train_loss: Option<f64>,
    pub eval: Option<EvalReport>,
}

struct Runner<'a> {
    config: &'a ExperimentConfig,
    quiet: bool,
    lexicon: Lexicon,
    mapping: VisemeMapping,
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> StageError + '_ {
    move |source| StageError::Io { path: path.to_path_buf(), source }
}

fn open(path: &Path) -> Result<BufReader<File>, StageError> {
    File::open(path).map(BufReader::new).map_err(io_err(path))
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), StageError> {
    std::fs::write(path, bytes).map_err(io_err(path))
}

fn short_hash<T: Hash + ?Sized>(value: &T) -> String {
    let mut h = DefaultHasher::new();
    value.hash(&mut h);
    format!("{:016x}", h.finish())
}

/// Identifies the settings that affect results. Paths are left out so
/// that the same experiment in two directories gets the same id.
pub fn config_id(config: &ExperimentConfig) -> String {
    let c = config;
    let key = format!(
        "{:?}|{}|{:?}|{}|{:?}|{:?}|{:?}|{}|{}|{:?}|{}",
        c.sample_size, c.seed, c.split, c.boundaries, c.model, c.train, c.decode, c.beam_width,
        c.max_len.unwrap_or(0), c.noise.to_bits(), c.sample_rows
    );
    short_hash(&key)
}

impl<'a> Runner<'a> {
    fn new(config: &'a ExperimentConfig, quiet: bool) -> Result<Runner<'a>, StageError> {
        let lexicon = match &config.dictionary {
            Asset::Bundled => Lexicon::bundled(),
            Asset::File(p) => Lexicon::from_reader(open(p)?)?,
        };
        let mapping = match &config.mapping {
            Asset::Bundled => VisemeMapping::bundled(lexicon.inventory())?,
            Asset::File(p) => VisemeMapping::from_reader(open(p)?, lexicon.inventory())?,
        };
        Ok(Runner { config, quiet, lexicon, mapping })
    }

    fn say(&self, msg: impl AsRef<str>) {
        if !self.quiet {
            eprintln!("{}", msg.as_ref());
        }
    }

    fn out(&self, name: &str) -> PathBuf {
        self.config.output_dir.join(name)
    }

    fn vocab(&self) -> TokenVocab {
        TokenVocab::from_mapping(&self.mapping, self.config.boundaries)
    }

    /// Normalized, dictionary-filtered and (optionally) sampled sentences.
    fn text_corpus(&self) -> Result<TextCorpus, StageError> {
        let path = &self.config.corpus;
        let (raw, rejected) = TextCorpus::read_normalized(open(path)?, path.display().to_string())?;
        let (mut corpus, dropped) = raw.filter_by_lexicon(&self.lexicon);
        self.say(format!(
            "corpus: {} sentences kept, {rejected} rejected by normalization, {dropped} with out-of-dictionary words",
            corpus.len()
        ));
        if let Some(n) = self.config.sample_size.filter(|&n| n < corpus.len()) {
            let mut rng = ChaCha8Rng::seed_from_u64(self.config.seed);
            let mut keep = rand::seq::index::sample(&mut rng, corpus.len(), n).into_vec();
            keep.sort_unstable();
            corpus.sentences = keep.into_iter().map(|i| corpus.sentences[i].clone()).collect();
            self.say(format!("corpus: sampled {n} sentences"));
        }
        if corpus.is_empty() {
            return Err(StageError::EmptyCorpus);
        }
        Ok(corpus)
    }

    fn prepare(&self, summary: &mut RunSummary) -> Result<(), StageError> {
        let corpus = self.text_corpus()?;
        let parallel = ParallelCorpus::build(&corpus, &self.lexicon, &self.mapping, self.config.boundaries)?
            .split(self.config.split, self.config.seed)?;
        let mut buf = Vec::new();
        parallel.write_tsv(&mut buf)?;
        write_file(&self.out(PARALLEL), &buf)?;
        let mut buf = Vec::new();
        VocabStats::from_corpus(&corpus).write_tsv(&mut buf).map_err(io_err(&self.out(VOCAB)))?;
        write_file(&self.out(VOCAB), &buf)?;
        let sizes: Vec<String> = Split::ALL.iter().map(|&s| format!("{s}={}", parallel.subset(s).len())).collect();
        self.say(format!("prepare: {} examples ({})", parallel.len(), sizes.join(" ")));
        summary.examples = Some(parallel.len());
        Ok(())
    }

    fn analyze(&self, summary: &mut RunSummary) -> Result<(), StageError> {
        let stats = VocabStats::from_corpus(&self.text_corpus()?);
        let classes = group_homovisemes(&stats, &self.lexicon, &self.mapping)?;
        let report = greedy_lower_bound(&classes, stats.total_tokens(), self.mapping.name())?;
        write_file(&self.out(LOWER_BOUND), report.to_report_text().as_bytes())?;
        write_file(&self.out(AMBIGUITY), ambiguity_report(&classes, 20).to_table().as_bytes())?;
        self.say(format!(
            "analyze: wer_lb={:.4} over {} tokens, {} ambiguous classes",
            report.wer_lb,
            report.total_tokens,
            report.num_ambiguous()
        ));
        summary.wer_lb = Some(report.wer_lb);
        Ok(())
    }

    fn load_parallel(&self) -> Result<ParallelCorpus, StageError> {
        Ok(ParallelCorpus::read_tsv(open(&self.out(PARALLEL))?)?)
    }

    fn pairs(vocab: &TokenVocab, examples: &[&ParallelExample]) -> Result<Vec<Pair>, StageError> {
        examples
            .iter()
            .map(|e| {
                Ok(Pair { source: vocab.encode_source(&e.visemes)?, target: vocab.encode_target(&e.text)? })
            })
            .collect()
    }

    fn train(&self, summary: &mut RunSummary) -> Result<(), StageError> {
        let parallel = self.load_parallel()?;
        let vocab = self.vocab();
        let train = Self::pairs(&vocab, &parallel.subset(Split::Train))?;
        let valid = Self::pairs(&vocab, &parallel.subset(Split::Valid))?;
        if train.is_empty() {
            return Err(StageError::EmptySplit(Split::Train));
        }
        let config = self.config.model_config(vocab.source_size(), vocab.target_size());
        let init = ModelParams::init(&config)?;
        self.say(format!(
            "train: {} pairs, {} validation, {} parameters",
            train.len(),
            valid.len(),
            init.num_parameters()
        ));
        let outcome = train_with_callback(&init, &vocab, &train, &valid, &self.config.train, |r, _| {
            let cer = r.valid_cer.map_or("-".to_string(), |c| format!("{c:.4}"));
            self.say(format!("  epoch {:>3}  loss {:.4}  valid_cer {cer}  {:.1}s", r.epoch, r.train_loss, r.wall_seconds));
            true
        })?;

        let mut log = String::from("epoch\ttrain_loss\tvalid_cer\n");
        let mut timing = String::from("epoch\twall_seconds\n");
        for r in &outcome.log {
            let cer = r.valid_cer.map_or("NA".to_string(), |c| format!("{c:.6}"));
            log.push_str(&format!("{}\t{:.6}\t{cer}\n", r.epoch, r.train_loss));
            timing.push_str(&format!("{}\t{:.3}\n", r.epoch, r.wall_seconds));
        }
        log.push_str(&format!("# best_epoch={}\n", outcome.best_epoch));
        write_file(&self.out(TRAIN_LOG), log.as_bytes())?;
        write_file(&self.out(TRAIN_TIMING), timing.as_bytes())?;
        let model = Model::new(vocab, outcome.params)?;
        save_checkpoint(&model, self.out(CHECKPOINT)).map_err(|e| match e {
            Seq2SeqError::Io(source) => StageError::Io { path: self.out(CHECKPOINT), source },
            other => other.into(),
        })?;
        summary.final_train_loss = outcome.log.last().map(|r| r.train_loss);
        Ok(())
    }

    fn load_model(&self) -> Result<(Model, String), StageError> {
        let path = self.out(CHECKPOINT);
        let bytes = std::fs::read(&path).map_err(io_err(&path))?;
        Ok((Model::from_bytes(&bytes)?, short_hash(&bytes)))
    }

    fn max_len(&self, source_len: usize) -> usize {
        self.config.max_len.unwrap_or_else(|| default_max_len(source_len))
    }

    fn decode(&self, model: &Model, visemes: &[String]) -> Result<String, StageError> {
        let max_len = self.max_len(visemes.len());
        Ok(match self.config.decode {
            DecodeMode::Greedy => model.greedy(visemes, max_len)?,
            DecodeMode::Beam => model.beam(visemes, self.config.beam_width, max_len)?,
        })
    }

    fn evaluate(&self, summary: &mut RunSummary) -> Result<(), StageError> {
        let parallel = self.load_parallel()?;
        let test = parallel.subset(Split::Test);
        if test.is_empty() {
            return Err(StageError::EmptySplit(Split::Test));
        }
        let (model, model_id) = self.load_model()?;
        let alphabet: Vec<String> =
            model.vocab.source_tokens().iter().filter(|t| t.as_str() != WORD_BOUNDARY).cloned().collect();
        let mut rng = ChaCha8Rng::seed_from_u64(self.config.seed ^ NOISE_STREAM);
        let mut rows = Vec::with_capacity(test.len());
        for e in &test {
            let noisy = inject_with_rng(&e.visemes, &alphabet, self.config.noise, &mut rng)?;
            rows.push((e.text.clone(), self.decode(&model, &noisy)?));
        }
        let report = corpus_error_rates(&rows)?.with_ids(model_id, config_id(self.config));
        write_file(&self.out(EVAL), report.to_report_text().as_bytes())?;
        write_file(&self.out(SAMPLES), report.sample_table(self.config.sample_rows).as_bytes())?;
        self.say(format!(
            "evaluate: {} sentences, WER {:.4}, CER {:.4} ({} decoding, noise {})",
            report.n_examples, report.wer, report.cer, self.config.decode, self.config.noise
        ));
        summary.eval = Some(report);
        Ok(())
    }
}

fn prepare_run(config: &ExperimentConfig) -> Result<(), RunError> {
    config.validate()?;
    config.check_inputs()?;
    std::fs::create_dir_all(&config.output_dir).map_err(|source| RunError::Stage {
        stage: Stage::Prepare,
        source: StageError::Io { path: config.output_dir.clone(), source },
    })?;
    Ok(())
}

/// Validates the config and input paths, then runs `stage` (or every stage
/// in order for [`Stage::All`]). Nothing is written if validation fails.
pub fn run_experiment(config: &ExperimentConfig, stage: Stage, quiet: bool) -> Result<RunSummary, RunError> {
    prepare_run(config)?;
    let stages = stage.expand();
    let runner = Runner::new(config, quiet).map_err(|source| RunError::Stage { stage: stages[0], source })?;
    let mut summary = RunSummary::default();
    for &s in stages {
        let result = match s {
            Stage::Prepare => runner.prepare(&mut summary),
            Stage::Analyze => runner.analyze(&mut summary),
            Stage::Train => runner.train(&mut summary),
            Stage::Evaluate => runner.evaluate(&mut summary),
            Stage::All => unreachable!("expanded above"),
        };
        result.map_err(|source| RunError::Stage { stage: s, source })?;
    }
    Ok(summary)
}

/// Decodes one line of whitespace-separated viseme tokens with the trained
/// checkpoint, using the configured decoding mode.
pub fn decode_line(config: &ExperimentConfig, line: &str) -> Result<String, RunError> {
    config.validate()?;
    let wrap = RunError::Decode;
    let runner = Runner::new(config, true).map_err(wrap)?;
    let tokens: Vec<String> = line.split_whitespace().map(str::to_string).collect();
    if tokens.is_empty() {
        return Err(wrap(StageError::EmptyInput));
    }
    let (model, _) = runner.load_model().map_err(wrap)?;
    runner.decode(&model, &tokens).map_err(wrap)
}
