use std::path::PathBuf;

use anyhow::{bail, Result};
use clap::Args;
use noov::corpus::read_sentences;
use noov::eval::{bleu_corpus, length_bucket_report, Smoothing, DEFAULT_BUCKETS, MAX_N};

use super::write_text;
use crate::config::parse_serde;

/// Score translations with corpus BLEU, overall and by source length
#[derive(Args, Debug)]
pub struct EvaluateArgs {
    /// Hypothesis file, one tokenized sentence per line
    #[arg(long, value_name = "FILE")]
    pub hyp: PathBuf,
    /// Reference file, line-aligned with --hyp
    #[arg(long, value_name = "FILE")]
    pub r#ref: PathBuf,
    /// Source file used for length buckets [default: none, no bucket report]
    #[arg(long, value_name = "FILE")]
    pub src: Option<PathBuf>,
    /// Inclusive lower bounds of the source-length buckets
    #[arg(long, value_delimiter = ',', default_values_t = DEFAULT_BUCKETS)]
    pub buckets: Vec<usize>,
    /// Zero-precision smoothing: none | add_one_for_zero
    #[arg(long, value_parser = parse_serde::<Smoothing>, default_value = "none")]
    pub smoothing: Smoothing,
    /// Directory for bleu.tsv, buckets.tsv, buckets.json and buckets.svg [default: none, stdout only]
    #[arg(long, value_name = "DIR")]
    pub out_dir: Option<PathBuf>,
}

pub fn run(args: EvaluateArgs) -> Result<()> {
    let hyps = read_hyps(&args.hyp)?;
    let refs = read_sentences(&args.r#ref)?;
    let report = bleu_corpus(&hyps, &refs, MAX_N, args.smoothing)?;
    println!("{report}");

    let buckets = match &args.src {
        Some(src) => {
            let lengths: Vec<usize> = read_sentences(src)?.iter().map(Vec::len).collect();
            let b = length_bucket_report(&hyps, &refs, &lengths, &args.buckets, args.smoothing)?;
            print!("{}", b.to_tsv());
            Some(b)
        }
        None => None,
    };

    if let Some(dir) = &args.out_dir {
        write_text(&dir.join("bleu.tsv"), &report.to_tsv())?;
        if let Some(b) = &buckets {
            write_text(&dir.join("buckets.tsv"), &b.to_tsv())?;
            write_text(&dir.join("buckets.svg"), &b.to_svg())?;
            let mut json = serde_json::to_string_pretty(b)?;
            json.push('\n');
            write_text(&dir.join("buckets.json"), &json)?;
        }
    }
    Ok(())
}

/// Hypothesis files may contain empty lines (empty translations).
fn read_hyps(path: &std::path::Path) -> Result<Vec<Vec<String>>> {
    let text = noov::corpus::read_utf8(path)?;
    if text.is_empty() {
        bail!("{}: no hypotheses", path.display());
    }
    let body = text.strip_suffix('\n').unwrap_or(&text);
    Ok(body
        .split('\n')
        .map(|l| noov::corpus::tokenize(l.strip_suffix('\r').unwrap_or(l)))
        .collect())
}
