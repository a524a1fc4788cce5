use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::Args;
use noov::corpus::{oov_rate, split_corpus, SplitSpec, Vocabulary};

use super::load_pair;
use crate::config::{ConfigArg, CorpusArgs, RunConfig};

/// Split a parallel corpus into train/dev/test files and write vocabularies
#[derive(Args, Debug)]
pub struct PrepareArgs {
    #[command(flatten)]
    pub config: ConfigArg,
    /// Source-language file, one tokenized sentence per line
    #[arg(long, value_name = "FILE")]
    pub src: PathBuf,
    /// Target-language file, line-aligned with --src
    #[arg(long, value_name = "FILE")]
    pub tgt: PathBuf,
    /// Output directory [default: paths.output from the config]
    #[arg(long, value_name = "DIR")]
    pub out_dir: Option<PathBuf>,
    #[command(flatten)]
    pub corpus: CorpusArgs,
}

pub fn run(args: PrepareArgs) -> Result<()> {
    let mut cfg = RunConfig::load(args.config.config.as_deref())?;
    args.corpus.apply(&mut cfg.corpus);
    if args.out_dir.is_some() {
        cfg.paths.output = args.out_dir.clone();
    }
    let out = cfg.output_dir()?.to_path_buf();

    let corpus = load_pair(&args.src, &args.tgt, cfg.corpus.split_punct)?;
    let spec = SplitSpec {
        test_fraction: cfg.corpus.test_fraction,
        dev_fraction_of_rest: cfg.corpus.dev_fraction,
        seed: cfg.corpus.seed,
    };
    let (train, dev, test) = split_corpus(&corpus, &spec)?;
    std::fs::create_dir_all(&out).with_context(|| format!("cannot create {}", out.display()))?;
    for (name, part) in [("train", &train), ("dev", &dev), ("test", &test)] {
        part.write_parallel(&out.join(format!("{name}.src")), &out.join(format!("{name}.tgt")))?;
    }
    let src_vocab = Vocabulary::build(train.sources(), 1);
    let tgt_vocab = Vocabulary::build(train.targets(), 1);
    src_vocab.save(&out.join("vocab.src.tsv"))?;
    tgt_vocab.save(&out.join("vocab.tgt.tsv"))?;
    cfg.echo(&out, "prepare")?;

    let stats = corpus.stats();
    log::info!(
        "{} pairs; source {} tokens ({:.1}/sentence), target {} tokens ({:.1}/sentence)",
        stats.pairs,
        stats.source_tokens,
        stats.mean_source_len(),
        stats.target_tokens,
        stats.mean_target_len()
    );
    if !test.is_empty() {
        log::info!(
            "test OOV rate vs train vocabulary: source {:.4}, target {:.4}",
            oov_rate(test.sources(), &src_vocab)?,
            oov_rate(test.targets(), &tgt_vocab)?
        );
    }
    println!("train\t{}", train.len());
    println!("dev\t{}", dev.len());
    println!("test\t{}", test.len());
    Ok(())
}
