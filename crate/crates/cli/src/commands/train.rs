use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::Args;
use noov::corpus::ParallelCorpus;
use noov::model::{fine_tune, train, ModelCheckpoint, TrainOutcome};

use super::{load_pairs, write_text};
use crate::config::{ArchArgs, ConfigArg, OptimArgs, RunConfig};

pub const CHECKPOINT_FILE: &str = "model.ckpt";
pub const LOG_FILE: &str = "train_log.tsv";

#[derive(Args, Debug)]
pub struct DataArgs {
    /// Source side of the training pairs (repeatable; several sets are concatenated)
    #[arg(long, value_name = "FILE", required = true)]
    pub train_src: Vec<PathBuf>,
    /// Target side of the training pairs (repeatable, paired with --train-src)
    #[arg(long, value_name = "FILE", required = true)]
    pub train_tgt: Vec<PathBuf>,
    /// Source side of the dev pairs (repeatable) [default: none, select on train loss]
    #[arg(long, value_name = "FILE")]
    pub dev_src: Vec<PathBuf>,
    /// Target side of the dev pairs (repeatable, paired with --dev-src)
    #[arg(long, value_name = "FILE")]
    pub dev_tgt: Vec<PathBuf>,
    /// Output directory for the checkpoint and training log [default: paths.output]
    #[arg(long, value_name = "DIR")]
    pub out_dir: Option<PathBuf>,
    /// Separate leading and trailing ASCII punctuation from words [default: off]
    #[arg(long)]
    pub split_punct: bool,
}

impl DataArgs {
    fn load(&self, cfg: &RunConfig) -> Result<(ParallelCorpus, ParallelCorpus)> {
        let train = load_pairs("train", &self.train_src, &self.train_tgt, cfg.corpus.split_punct)?;
        let dev = if self.dev_src.is_empty() && self.dev_tgt.is_empty() {
            log::warn!("no dev set given; model selection uses the training loss");
            ParallelCorpus::default()
        } else {
            load_pairs("dev", &self.dev_src, &self.dev_tgt, cfg.corpus.split_punct)?
        };
        Ok((train, dev))
    }
}

/// Train a model from scratch
#[derive(Args, Debug)]
pub struct TrainArgs {
    #[command(flatten)]
    pub config: ConfigArg,
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub arch: ArchArgs,
    #[command(flatten)]
    pub optim: OptimArgs,
}

/// Continue training a checkpoint on new data with a fresh optimizer
#[derive(Args, Debug)]
pub struct FinetuneArgs {
    #[command(flatten)]
    pub config: ConfigArg,
    /// Checkpoint to start from; it is never modified [default: paths.checkpoint]
    #[arg(long, value_name = "FILE")]
    pub init_checkpoint: Option<PathBuf>,
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub optim: OptimArgs,
}

fn history_tsv(outcome: &TrainOutcome) -> String {
    let mut out = String::from("epoch\ttrain_loss\tdev_loss\tsteps\n");
    for e in &outcome.history {
        let _ = writeln!(out, "{}\t{:.6}\t{:.6}\t{}", e.epoch, e.train_loss, e.dev_loss, e.steps);
    }
    out
}

fn finish(cfg: &RunConfig, out: &Path, command: &str, outcome: &TrainOutcome) -> Result<()> {
    std::fs::create_dir_all(out).with_context(|| format!("cannot create {}", out.display()))?;
    outcome.checkpoint.save(&out.join(CHECKPOINT_FILE))?;
    write_text(&out.join(LOG_FILE), &history_tsv(outcome))?;
    cfg.echo(out, command)?;
    let meta = &outcome.checkpoint.meta;
    log::info!(
        "best epoch {} (dev loss {}) of {}; checkpoint {}",
        meta.epoch,
        meta.dev_loss.map_or_else(|| "n/a".to_owned(), |l| format!("{l:.6}")),
        outcome.history.len(),
        out.join(CHECKPOINT_FILE).display()
    );
    Ok(())
}

pub fn run_train(args: TrainArgs) -> Result<()> {
    let mut cfg = RunConfig::load(args.config.config.as_deref())?;
    args.arch.apply(&mut cfg.model);
    args.optim.apply(&mut cfg.model);
    cfg.corpus.split_punct |= args.data.split_punct;
    if args.data.out_dir.is_some() {
        cfg.paths.output = args.data.out_dir.clone();
    }
    let out = cfg.output_dir()?.to_path_buf();
    let (train_set, dev) = args.data.load(&cfg)?;
    log::info!("training on {} pairs, dev {} pairs", train_set.len(), dev.len());
    let outcome = train(cfg.model.clone(), &train_set, &dev)?;
    finish(&cfg, &out, "train", &outcome)
}

pub fn run_finetune(args: FinetuneArgs) -> Result<()> {
    let mut cfg = RunConfig::load(args.config.config.as_deref())?;
    if args.init_checkpoint.is_some() {
        cfg.paths.checkpoint = args.init_checkpoint.clone();
    }
    let init = cfg
        .paths
        .checkpoint
        .clone()
        .context("no checkpoint: pass --init-checkpoint or set paths.checkpoint")?;
    let base = ModelCheckpoint::load(&init)?;
    let arch = &base.model.config;
    cfg.model.hidden_size = arch.hidden_size;
    cfg.model.embedding_size = arch.embedding_size;
    cfg.model.layers = arch.layers;
    args.optim.apply(&mut cfg.model);
    cfg.corpus.split_punct |= args.data.split_punct;
    if args.data.out_dir.is_some() {
        cfg.paths.output = args.data.out_dir.clone();
    }
    let out = cfg.output_dir()?.to_path_buf();
    let target = out.join(CHECKPOINT_FILE);
    if target.exists() && std::fs::canonicalize(&target)? == std::fs::canonicalize(&init)? {
        bail!("refusing to overwrite the initial checkpoint {}", init.display());
    }
    let (train_set, dev) = args.data.load(&cfg)?;
    log::info!("fine-tuning on {} pairs, dev {} pairs", train_set.len(), dev.len());
    let outcome = fine_tune(&base, &cfg.model, &train_set, &dev)?;
    finish(&cfg, &out, "finetune", &outcome)
}
