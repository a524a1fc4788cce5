//! The JSON run configuration and its command-line overrides.

use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use clap::Args;
use noov::decode::{DecodeConfig, LexiconMode, Renormalize, RepetitionTrigger};
use noov::model::ModelConfig;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub corpus: CorpusConfig,
    pub align: AlignConfig,
    pub model: ModelConfig,
    pub decode: DecodeConfig,
    pub paths: PathsConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CorpusConfig {
    pub test_fraction: f64,
    pub dev_fraction: f64,
    pub seed: u64,
    pub split_punct: bool,
}

impl Default for CorpusConfig {
    fn default() -> Self {
        CorpusConfig {
            test_fraction: 0.2,
            dev_fraction: 0.1,
            seed: 0,
            split_punct: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AlignConfig {
    pub iterations: usize,
    pub smoothing: f64,
    pub null_word: bool,
    /// Cap on the pairs used to estimate one context lexicon.
    pub max_pairs: usize,
}

impl Default for AlignConfig {
    fn default() -> Self {
        AlignConfig {
            iterations: 20,
            smoothing: 0.0,
            null_word: true,
            max_pairs: noov::align::DEFAULT_MAX_PAIRS,
        }
    }
}

impl AlignConfig {
    pub fn em(&self) -> noov::align::EmConfig {
        noov::align::EmConfig {
            iterations: self.iterations,
            additive_smoothing: self.smoothing,
            null_word: self.null_word,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PathsConfig {
    pub lexicon: Option<PathBuf>,
    pub phrase_table: Option<PathBuf>,
    pub checkpoint: Option<PathBuf>,
    /// Output directory.
    pub output: Option<PathBuf>,
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else {
            return Ok(RunConfig::default());
        };
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("cannot read config {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("invalid config {}", path.display()))
    }

    /// Writes the effective configuration as `<dir>/<command>.config.json`.
    pub fn echo(&self, dir: &Path, command: &str) -> Result<()> {
        std::fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;
        let path = dir.join(format!("{command}.config.json"));
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        std::fs::write(&path, text).with_context(|| format!("cannot write {}", path.display()))
    }

    pub fn output_dir(&self) -> Result<&Path> {
        self.paths
            .output
            .as_deref()
            .context("no output directory: pass --out-dir or set paths.output")
    }
}

/// Parses a value through its JSON string form, so flags accept exactly the
/// spellings the config file does.
pub fn parse_serde<T: DeserializeOwned>(s: &str) -> Result<T, String> {
    serde_json::from_value(serde_json::Value::String(s.to_owned())).map_err(|e| e.to_string())
}

fn set<T>(slot: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *slot = v;
    }
}

fn set_some<T>(slot: &mut Option<T>, value: Option<T>) {
    if value.is_some() {
        *slot = value;
    }
}

#[derive(Args, Debug, Default)]
pub struct ConfigArg {
    /// JSON run configuration; flags override its values
    #[arg(long, value_name = "FILE")]
    pub config: Option<PathBuf>,
}

#[derive(Args, Debug, Default)]
pub struct CorpusArgs {
    /// Fraction of pairs held out for testing [default: 0.2]
    #[arg(long)]
    pub test_frac: Option<f64>,
    /// Fraction of the remaining pairs used for development [default: 0.1]
    #[arg(long)]
    pub dev_frac: Option<f64>,
    /// Shuffle seed for the split [default: 0]
    #[arg(long)]
    pub split_seed: Option<u64>,
    /// Separate leading and trailing ASCII punctuation from words [default: off]
    #[arg(long)]
    pub split_punct: bool,
}

impl CorpusArgs {
    pub fn apply(&self, c: &mut CorpusConfig) {
        set(&mut c.test_fraction, self.test_frac);
        set(&mut c.dev_fraction, self.dev_frac);
        set(&mut c.seed, self.split_seed);
        if self.split_punct {
            c.split_punct = true;
        }
    }
}

#[derive(Args, Debug, Default)]
pub struct AlignArgs {
    /// EM iterations [default: 20]
    #[arg(long)]
    pub iters: Option<usize>,
    /// Additive smoothing over co-occurring targets [default: 0]
    #[arg(long)]
    pub smoothing: Option<f64>,
    /// Do not add the NULL source word [default: NULL word on]
    #[arg(long)]
    pub no_null: bool,
    /// Maximum pairs per context lexicon [default: 5000]
    #[arg(long)]
    pub max_pairs: Option<usize>,
}

impl AlignArgs {
    pub fn apply(&self, a: &mut AlignConfig) {
        set(&mut a.iterations, self.iters);
        set(&mut a.smoothing, self.smoothing);
        set(&mut a.max_pairs, self.max_pairs);
        if self.no_null {
            a.null_word = false;
        }
    }
}

#[derive(Args, Debug, Default)]
pub struct ArchArgs {
    /// LSTM hidden size [default: 128]
    #[arg(long)]
    pub hidden_size: Option<usize>,
    /// Word embedding size [default: 128]
    #[arg(long)]
    pub embedding_size: Option<usize>,
    /// Encoder and decoder layers [default: 2]
    #[arg(long)]
    pub layers: Option<usize>,
}

impl ArchArgs {
    pub fn apply(&self, m: &mut ModelConfig) {
        set(&mut m.hidden_size, self.hidden_size);
        set(&mut m.embedding_size, self.embedding_size);
        set(&mut m.layers, self.layers);
    }
}

#[derive(Args, Debug, Default)]
pub struct OptimArgs {
    /// Sentence pairs per update [default: 32]
    #[arg(long)]
    pub batch_size: Option<usize>,
    /// Dropout probability [default: 0.2]
    #[arg(long)]
    pub dropout: Option<f64>,
    /// Global gradient-norm clipping threshold [default: 5]
    #[arg(long)]
    pub grad_clip: Option<f64>,
    /// Adam learning rate [default: 0.001]
    #[arg(long)]
    pub lr: Option<f64>,
    /// Maximum training epochs [default: 100]
    #[arg(long)]
    pub max_epochs: Option<usize>,
    /// Epochs without dev-loss improvement before stopping [default: 5]
    #[arg(long)]
    pub patience: Option<usize>,
    /// Seed for initialization, shuffling and dropout [default: 1]
    #[arg(long)]
    pub seed: Option<u64>,
}

impl OptimArgs {
    pub fn apply(&self, m: &mut ModelConfig) {
        set(&mut m.batch_size, self.batch_size);
        set(&mut m.dropout, self.dropout);
        set(&mut m.grad_clip, self.grad_clip);
        set(&mut m.lr, self.lr);
        set(&mut m.max_epochs, self.max_epochs);
        set(&mut m.patience, self.patience);
        set(&mut m.seed, self.seed);
    }
}

#[derive(Args, Debug, Default)]
pub struct DecodeArgs {
    /// Beam size [default: 8]
    #[arg(long)]
    pub beam: Option<usize>,
    /// Lexicon weight in the output mixture, in [0, 1] [default: 0.2]
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Maximum output length [default: 2.5 x source length + 5]
    #[arg(long)]
    pub max_len: Option<usize>,
    /// Lexicon score normalization: softmax | none [default: softmax]
    #[arg(long, value_parser = parse_serde::<Renormalize>)]
    pub renormalize: Option<Renormalize>,
    /// Lexicon source: global | context | context_backoff_global [default: context_backoff_global]
    #[arg(long, value_parser = parse_serde::<LexiconMode>)]
    pub lexicon_mode: Option<LexiconMode>,
    /// Repetition trigger: output_argmax | attention_argmax [default: output_argmax]
    #[arg(long, value_parser = parse_serde::<RepetitionTrigger>)]
    pub trigger: Option<RepetitionTrigger>,
    /// Disable phrase-table repair of repeated tokens [default: repair on]
    #[arg(long)]
    pub no_repetition_fix: bool,
}

impl DecodeArgs {
    pub fn apply(&self, d: &mut DecodeConfig) {
        set(&mut d.beam_size, self.beam);
        set(&mut d.alpha, self.alpha);
        set_some(&mut d.max_len, self.max_len);
        set(&mut d.renormalize, self.renormalize);
        set(&mut d.lexicon_mode, self.lexicon_mode);
        set(&mut d.trigger, self.trigger);
        if self.no_repetition_fix {
            d.repetition_fix = false;
        }
    }
}

#[derive(Args, Debug, Default)]
pub struct LexiconArgs {
    /// Global lexicon TSV (source, target, probability) [default: none]
    #[arg(long, value_name = "FILE")]
    pub lexicon: Option<PathBuf>,
    /// Phrase table TSV (source phrase, target phrase) [default: none]
    #[arg(long, value_name = "FILE")]
    pub phrase_table: Option<PathBuf>,
    /// Source side of the pairs used for context lexicons [default: none]
    #[arg(long, value_name = "FILE", requires = "context_tgt")]
    pub context_src: Option<PathBuf>,
    /// Target side of the pairs used for context lexicons [default: none]
    #[arg(long, value_name = "FILE", requires = "context_src")]
    pub context_tgt: Option<PathBuf>,
}

impl LexiconArgs {
    pub fn apply(&self, p: &mut PathsConfig) {
        set_some(&mut p.lexicon, self.lexicon.clone());
        set_some(&mut p.phrase_table, self.phrase_table.clone());
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_and_strict_keys() {
        let c: RunConfig = serde_json::from_str("{}").unwrap();
        assert_eq!(c, RunConfig::default());
        assert_eq!(c.model.hidden_size, 128);
        assert_eq!(c.model.batch_size, 32);
        assert_eq!(c.decode.beam_size, 8);
        assert_eq!(c.decode.alpha, 0.2);

        let c: RunConfig =
            serde_json::from_str(r#"{"decode": {"beam": 4, "lexicon_mode": "global"}}"#).unwrap();
        assert_eq!(c.decode.beam_size, 4);
        assert_eq!(c.decode.lexicon_mode, LexiconMode::Global);

        assert!(serde_json::from_str::<RunConfig>(r#"{"modle": {}}"#).is_err());
        assert!(serde_json::from_str::<RunConfig>(r#"{"model": {"hidden": 3}}"#).is_err());
    }

    #[test]
    fn echo_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let mut c = RunConfig::default();
        c.model.seed = 9;
        c.echo(dir.path(), "train").unwrap();
        let back = RunConfig::load(Some(&dir.path().join("train.config.json"))).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn enum_flags_use_config_spelling() {
        assert_eq!(parse_serde::<Renormalize>("none"), Ok(Renormalize::None));
        assert!(parse_serde::<LexiconMode>("nope").is_err());
    }
}
