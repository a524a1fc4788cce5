use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::Args;
use noov::align::ibm1_em_traced;

use super::load_pairs;
use crate::config::{AlignArgs, ConfigArg, RunConfig};

/// Estimate a bilingual lexicon p(target | source) with IBM Model 1
#[derive(Args, Debug)]
pub struct AlignCmdArgs {
    #[command(flatten)]
    pub config: ConfigArg,
    /// Source side of the training pairs (repeatable, paired with --tgt)
    #[arg(long, value_name = "FILE", required = true)]
    pub src: Vec<PathBuf>,
    /// Target side of the training pairs (repeatable, paired with --src)
    #[arg(long, value_name = "FILE", required = true)]
    pub tgt: Vec<PathBuf>,
    /// Lexicon TSV to write [default: paths.lexicon from the config]
    #[arg(long, value_name = "FILE")]
    pub out: Option<PathBuf>,
    /// Separate leading and trailing ASCII punctuation from words [default: off]
    #[arg(long)]
    pub split_punct: bool,
    #[command(flatten)]
    pub align: AlignArgs,
}

pub fn run(args: AlignCmdArgs) -> Result<()> {
    let mut cfg = RunConfig::load(args.config.config.as_deref())?;
    args.align.apply(&mut cfg.align);
    cfg.corpus.split_punct |= args.split_punct;
    if args.out.is_some() {
        cfg.paths.lexicon = args.out.clone();
    }
    let out = cfg
        .paths
        .lexicon
        .clone()
        .context("no output file: pass --out or set paths.lexicon")?;

    let corpus = load_pairs("align", &args.src, &args.tgt, cfg.corpus.split_punct)?;
    let run = ibm1_em_traced(&corpus, &cfg.align.em())?;
    for (i, ll) in run.log_likelihood.iter().enumerate() {
        log::info!("EM iteration {i:>3}  log-likelihood {ll:.6}");
    }
    run.lexicon.save(&out)?;
    if let Some(dir) = out.parent() {
        cfg.echo(if dir.as_os_str().is_empty() { ".".as_ref() } else { dir }, "align")?;
    }
    log::info!("{} source entries written to {}", run.lexicon.len(), out.display());
    Ok(())
}
