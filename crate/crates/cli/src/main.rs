//! `noov`: corpus preparation, lexicon induction, training, translation and
//! evaluation for lexicon-assisted neural translation.

mod commands;
mod config;

use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};

use commands::{align, evaluate, phrasebook, prepare, train, translate};

/// Attention seq2seq translation assisted by a bilingual lexicon and a phrase table.
///
/// The NOOV_THREADS environment variable caps the number of worker threads.
#[derive(Parser, Debug)]
#[command(name = "noov", version, propagate_version = true)]
struct Cli {
    /// Log verbosity on stderr: error, warn, info, debug or trace [default: info]
    #[arg(long, global = true, value_name = "LEVEL")]
    log: Option<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    Prepare(prepare::PrepareArgs),
    Align(align::AlignCmdArgs),
    Phrasebook(phrasebook::PhrasebookArgs),
    Train(train::TrainArgs),
    Finetune(train::FinetuneArgs),
    Translate(translate::TranslateArgs),
    Evaluate(evaluate::EvaluateArgs),
    TuneAlpha(translate::TuneAlphaArgs),
}

fn init_threads() -> Result<()> {
    let Ok(value) = std::env::var("NOOV_THREADS") else {
        return Ok(());
    };
    let n: usize = value
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .with_context(|| format!("NOOV_THREADS must be a positive integer, got {value:?}"))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .context("cannot configure the worker pool")
}

fn run(cli: Cli) -> Result<()> {
    init_threads()?;
    match cli.command {
        Command::Prepare(a) => prepare::run(a),
        Command::Align(a) => align::run(a),
        Command::Phrasebook(a) => phrasebook::run(a),
        Command::Train(a) => train::run_train(a),
        Command::Finetune(a) => train::run_finetune(a),
        Command::Translate(a) => translate::run_translate(a),
        Command::Evaluate(a) => evaluate::run(a),
        Command::TuneAlpha(a) => translate::run_tune_alpha(a),
    }
}

/// The error chain joined by ": ", skipping causes already quoted by the
/// message before them.
fn describe(e: &anyhow::Error) -> String {
    let mut out = String::new();
    for cause in e.chain() {
        let text = cause.to_string();
        if out.ends_with(&text) {
            continue;
        }
        if !out.is_empty() {
            out.push_str(": ");
        }
        out.push_str(&text);
    }
    out
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    env_logger::Builder::new()
        .parse_filters(cli.log.as_deref().unwrap_or("info"))
        .format_timestamp(None)
        .target(env_logger::Target::Stderr)
        .init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("noov: error: {}", describe(&e));
            ExitCode::FAILURE
        }
    }
}
