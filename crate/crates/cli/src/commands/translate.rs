use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use clap::Args;
use noov::decode::{
    greedy_decode, translate_sentences, write_scores, write_translations, ContextSource,
    DecodeConfig, LexiconMode, LexiconSource, Translation,
};
use noov::eval::{bleu_corpus, experiment_summary, Smoothing, MAX_N};
use noov::lexicon::Lexicon;
use noov::model::{Model, ModelCheckpoint};
use noov::phrasebook::PhraseTable;
use rayon::prelude::*;

use super::{load_pair, load_sentences, write_text};
use crate::config::{AlignArgs, ConfigArg, DecodeArgs, LexiconArgs, RunConfig};

pub const ALPHA_GRID: [f64; 6] = [0.0, 0.2, 0.4, 0.6, 0.8, 1.0];

#[derive(Args, Debug)]
pub struct ResourceArgs {
    #[command(flatten)]
    pub config: ConfigArg,
    /// Model checkpoint [default: paths.checkpoint]
    #[arg(long, value_name = "FILE")]
    pub checkpoint: Option<PathBuf>,
    #[command(flatten)]
    pub lexicon: LexiconArgs,
    #[command(flatten)]
    pub decode: DecodeArgs,
    #[command(flatten)]
    pub align: AlignArgs,
    /// Separate leading and trailing ASCII punctuation from words [default: off]
    #[arg(long)]
    pub split_punct: bool,
    /// Pick the most probable token at each step instead of beam search [default: off]
    #[arg(long)]
    pub greedy: bool,
}

/// Everything needed to translate, loaded once.
pub struct Resources {
    pub cfg: RunConfig,
    pub model: Model<f32>,
    pub provider: LexiconSource,
    pub table: Option<PhraseTable>,
    pub greedy: bool,
}

impl ResourceArgs {
    fn config(&self) -> Result<RunConfig> {
        let mut cfg = RunConfig::load(self.config.config.as_deref())?;
        if self.checkpoint.is_some() {
            cfg.paths.checkpoint = self.checkpoint.clone();
        }
        self.lexicon.apply(&mut cfg.paths);
        self.decode.apply(&mut cfg.decode);
        self.align.apply(&mut cfg.align);
        cfg.corpus.split_punct |= self.split_punct;
        cfg.decode.validate()?;
        Ok(cfg)
    }

    pub fn load(&self) -> Result<Resources> {
        let cfg = self.config()?;
        let ck_path = cfg
            .paths
            .checkpoint
            .as_deref()
            .context("no checkpoint: pass --checkpoint or set paths.checkpoint")?;
        let model = ModelCheckpoint::load(ck_path)?.model;
        let global = match &cfg.paths.lexicon {
            Some(p) => Lexicon::load(p)?,
            None => Lexicon::new(),
        };
        let context = match (&self.lexicon.context_src, &self.lexicon.context_tgt) {
            (Some(s), Some(t)) => {
                let corpus = load_pair(s, t, cfg.corpus.split_punct)?;
                let mut source = ContextSource::new(corpus, cfg.align.em());
                source.max_pairs = cfg.align.max_pairs;
                Some(source)
            }
            _ => None,
        };
        let mode = cfg.decode.lexicon_mode;
        let provider = if cfg.decode.alpha == 0.0 {
            LexiconSource::new(LexiconMode::Global, global, None)?
        } else {
            if mode == LexiconMode::Global && cfg.paths.lexicon.is_none() {
                anyhow::bail!("alpha > 0 with lexicon_mode global needs --lexicon");
            }
            if mode != LexiconMode::Global && context.is_none() {
                anyhow::bail!(
                    "lexicon_mode {} needs --context-src/--context-tgt training pairs \
                     (or use --lexicon-mode global, or --alpha 0)",
                    serde_json::to_string(&mode)?
                );
            }
            LexiconSource::new(mode, global, context)?
        };
        let table = cfg.paths.phrase_table.as_deref().map(PhraseTable::load).transpose()?;
        Ok(Resources {
            cfg,
            model,
            provider,
            table,
            greedy: self.greedy,
        })
    }
}

impl Resources {
    pub fn translate(&self, sentences: &[Vec<String>], decode: &DecodeConfig) -> Result<Vec<Translation>> {
        let table = self.table.as_ref();
        if self.greedy {
            return Ok(sentences
                .par_iter()
                .map(|s| greedy_decode(&self.model, s, &self.provider, table, decode))
                .collect::<noov::Result<_>>()?);
        }
        Ok(translate_sentences(&self.model, sentences, &self.provider, table, decode)?)
    }
}

/// Translate a tokenized source file with a trained checkpoint
#[derive(Args, Debug)]
pub struct TranslateArgs {
    #[command(flatten)]
    pub resources: ResourceArgs,
    /// Source file, one tokenized sentence per line
    #[arg(long, value_name = "FILE")]
    pub input: PathBuf,
    /// Translation file to write [default: <paths.output>/translations.txt]
    #[arg(long, value_name = "FILE")]
    pub output: Option<PathBuf>,
    /// Also write `line<TAB>score<TAB>length` rows to this file [default: none]
    #[arg(long, value_name = "FILE")]
    pub scores: Option<PathBuf>,
}

fn parent_dir(path: &Path) -> &Path {
    match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    }
}

pub fn run_translate(args: TranslateArgs) -> Result<()> {
    let res = args.resources.load()?;
    let output = match &args.output {
        Some(p) => p.clone(),
        None => res.cfg.output_dir()?.join("translations.txt"),
    };
    let sentences = load_sentences(&args.input, res.cfg.corpus.split_punct)?;
    let translations = res.translate(&sentences, &res.cfg.decode)?;
    std::fs::create_dir_all(parent_dir(&output))?;
    write_translations(&output, &translations)?;
    if let Some(p) = &args.scores {
        std::fs::create_dir_all(parent_dir(p))?;
        write_scores(p, &translations)?;
    }
    let mut cfg = res.cfg.clone();
    cfg.paths.output = Some(parent_dir(&output).to_path_buf());
    cfg.echo(parent_dir(&output), "translate")?;
    let substituted: usize = translations.iter().map(|t| t.substituted.len()).sum();
    log::info!(
        "{} sentences translated to {} ({substituted} phrase-table substitutions)",
        translations.len(),
        output.display()
    );
    Ok(())
}

/// Sweep the lexicon weight alpha over 0, 0.2, ..., 1 and report dev BLEU
#[derive(Args, Debug)]
pub struct TuneAlphaArgs {
    #[command(flatten)]
    pub resources: ResourceArgs,
    /// Source side of the dev pairs
    #[arg(long, value_name = "FILE")]
    pub dev_src: PathBuf,
    /// Target side of the dev pairs
    #[arg(long, value_name = "FILE")]
    pub dev_tgt: PathBuf,
    /// Directory for alpha_sweep.tsv and alpha_sweep.txt [default: paths.output]
    #[arg(long, value_name = "DIR")]
    pub out_dir: Option<PathBuf>,
}

pub fn run_tune_alpha(args: TuneAlphaArgs) -> Result<()> {
    let mut res = args.resources.load()?;
    if args.out_dir.is_some() {
        res.cfg.paths.output = args.out_dir.clone();
    }
    let out = res.cfg.output_dir()?.to_path_buf();
    let dev = load_pair(&args.dev_src, &args.dev_tgt, res.cfg.corpus.split_punct)?;
    let sources: Vec<Vec<String>> = dev.sources().map(<[String]>::to_vec).collect();
    let refs: Vec<Vec<String>> = dev.targets().map(<[String]>::to_vec).collect();

    let mut runs = Vec::new();
    let mut tsv = String::from("alpha\tbleu\n");
    for alpha in ALPHA_GRID {
        let decode = DecodeConfig {
            alpha,
            ..res.cfg.decode.clone()
        };
        let hyps: Vec<Vec<String>> = res
            .translate(&sources, &decode)?
            .into_iter()
            .map(|t| t.tokens)
            .collect();
        let report = bleu_corpus(&hyps, &refs, MAX_N, Smoothing::None)?;
        log::info!("alpha {alpha:.1}: {report}");
        let _ = writeln!(tsv, "{alpha:.1}\t{:.2}", 100.0 * report.bleu);
        runs.push((format!("alpha={alpha:.1}"), report));
    }
    let best = runs
        .iter()
        .enumerate()
        .fold(0, |b, (i, r)| if r.1.bleu > runs[b].1.bleu { i } else { b });
    let summary = experiment_summary(&runs);
    write_text(&out.join("alpha_sweep.tsv"), &tsv)?;
    write_text(&out.join("alpha_sweep.txt"), &summary.text)?;
    res.cfg.echo(&out, "tune-alpha")?;
    print!("{}", summary.text);
    println!("best\t{:.1}", ALPHA_GRID[best]);
    Ok(())
}
