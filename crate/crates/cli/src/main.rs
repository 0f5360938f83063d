use std::io::BufRead;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use lipdec_cli::{decode_line, run_experiment, ExperimentConfig, RunError, Stage};

#[derive(Parser)]
#[command(name = "lipdec", version, about = "Viseme-to-text experiments: prepare, analyze, train, evaluate")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Experiment config file (key = value lines).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Run this stage instead of the subcommand's own.
    #[arg(long, global = true)]
    stage: Option<Stage>,
    /// Override the config's master seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Only print errors and the decode result.
    #[arg(long, global = true)]
    quiet: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Normalize, filter and split the corpus into parallel.tsv.
    Prepare,
    /// Write the homoviseme lower-bound report.
    Analyze,
    /// Train the decoder and write model.ckpt.
    Train,
    /// Decode the test split and write eval.txt and samples.txt.
    Evaluate,
    /// Decode one line of space-separated viseme tokens (read from stdin if omitted).
    Decode { input: Option<String> },
    /// Run prepare, analyze, train and evaluate in order.
    All,
}

fn main() -> ExitCode {
    // Usage errors are validation errors (exit 1); clap would use 2.
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let Some(path) = cli.config.as_ref() else {
        eprintln!("error: --config PATH is required");
        return ExitCode::from(1);
    };
    let config = match ExperimentConfig::from_file(path) {
        Ok(c) => c,
        Err(e) => return fail(&RunError::Config(e)),
    };
    let config = match cli.seed {
        Some(seed) => config.with_seed(seed),
        None => config,
    };

    let stage = match &cli.command {
        Command::Prepare => Stage::Prepare,
        Command::Analyze => Stage::Analyze,
        Command::Train => Stage::Train,
        Command::Evaluate => Stage::Evaluate,
        Command::All => Stage::All,
        Command::Decode { input } => {
            let line = match input {
                Some(l) => l.clone(),
                None => {
                    let mut l = String::new();
                    if let Err(e) = std::io::stdin().lock().read_line(&mut l) {
                        eprintln!("error: cannot read stdin: {e}");
                        return ExitCode::from(2);
                    }
                    l
                }
            };
            return match decode_line(&config, &line) {
                Ok(text) => {
                    println!("{text}");
                    ExitCode::SUCCESS
                }
                Err(e) => fail(&e),
            };
        }
    };
    let stage = cli.stage.unwrap_or(stage);

    match run_experiment(&config, stage, cli.quiet) {
        Ok(summary) => {
            if !cli.quiet {
                if let Some(lb) = summary.wer_lb {
                    println!("wer_lb={lb:.4}");
                }
                if let Some(r) = &summary.eval {
                    println!("wer={:.4} cer={:.4} n={}", r.wer, r.cer, r.n_examples);
                }
            }
            ExitCode::SUCCESS
        }
        Err(e) => fail(&e),
    }
}

fn fail(err: &RunError) -> ExitCode {
    eprintln!("error: {err}");
    ExitCode::from(err.exit_code() as u8)
}
