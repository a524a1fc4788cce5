//! Lexicon-biased beam search with repetition repair through the phrase table.
//!
//! At every step the decoder distribution is interpolated with a distribution
//! derived from the bilingual lexicon and the current attention weights:
//! `output = α · lexicon + (1 − α) · decoder`.

mod beam;
mod provider;
mod translate;

use serde::{Deserialize, Serialize};

use crate::corpus::{is_special, Vocabulary, BOS, PAD, UNK};
use crate::error::{Error, Result};
use crate::lexicon::Lexicon;
use crate::phrasebook::PhraseTable;

pub use beam::{beam_search, greedy_decode, BeamOutput, Hypothesis, Translation};
pub use provider::{ContextSource, LexiconProvider, LexiconSource};
pub use translate::{translate_corpus, translate_sentences, write_scores, write_translations};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Renormalize {
    /// Exponentiate the support of the lexicon scores plus one aggregated
    /// "other" cell, then normalize.
    #[default]
    Softmax,
    /// Divide the lexicon scores by their sum.
    None,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LexiconMode {
    Global,
    Context,
    /// Context lexicon rows where available, global rows otherwise.
    #[default]
    ContextBackoffGlobal,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RepetitionTrigger {
    /// The best extension repeats the previously emitted token.
    #[default]
    OutputArgmax,
    /// Attention peaks on the same source position as at the previous step.
    AttentionArgmax,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DecodeConfig {
    #[serde(alias = "beam")]
    pub beam_size: usize,
    pub alpha: f64,
    /// Output length cap; `None` means ⌊2.5 · source length⌋ + 5.
    pub max_len: Option<usize>,
    pub renormalize: Renormalize,
    pub lexicon_mode: LexiconMode,
    pub repetition_fix: bool,
    pub trigger: RepetitionTrigger,
}

impl Default for DecodeConfig {
    fn default() -> Self {
        DecodeConfig {
            beam_size: 8,
            alpha: 0.2,
            max_len: None,
            renormalize: Renormalize::Softmax,
            lexicon_mode: LexiconMode::ContextBackoffGlobal,
            repetition_fix: true,
            trigger: RepetitionTrigger::OutputArgmax,
        }
    }
}

impl DecodeConfig {
    pub fn validate(&self) -> Result<()> {
        if self.beam_size == 0 {
            return Err(Error::Config("beam_size must be at least 1".into()));
        }
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::Config(format!("alpha {} outside [0, 1]", self.alpha)));
        }
        if self.max_len == Some(0) {
            return Err(Error::Config("max_len must be positive".into()));
        }
        Ok(())
    }

    pub fn max_len_for(&self, source_len: usize) -> usize {
        self.max_len
            .unwrap_or_else(|| (5 * source_len) / 2 + 5)
    }
}

/// Lexicon evidence over the target vocabulary for one decoding step.
#[derive(Clone, Debug, PartialEq)]
pub struct LexiconDistribution {
    pub probs: Vec<f64>,
    /// True when no lexicon row applied and the distribution is uniform.
    pub neutral: bool,
    /// Surface form of the out-of-vocabulary target that contributed most to
    /// the UNK cell, if any did.
    pub unk_surface: Option<String>,
}

/// Ids that can never be produced as output.
pub(crate) fn is_unemittable(id: usize) -> bool {
    id == PAD || id == BOS
}

/// Attention-weighted sum of the lexicon rows of the source tokens, scattered
/// into the target vocabulary and normalized according to `renormalize`.
///
/// Target words outside the vocabulary add their mass to UNK. Normalization
/// follows [`normalize_scores`]. When nothing matches, the result is uniform
/// over the emittable ids and flagged neutral.
pub fn lexicon_bias_distribution(
    att: &[f64],
    src_tokens: &[String],
    lexicon: &Lexicon,
    v_t: &Vocabulary,
    renormalize: Renormalize,
) -> Result<LexiconDistribution> {
    if att.len() != src_tokens.len() {
        return Err(Error::shape("attention vs source tokens", src_tokens.len(), att.len()));
    }
    let n = v_t.len();
    let mut pr = vec![0.0; n];
    let mut oov: Vec<(&str, f64)> = Vec::new();
    for (&a, token) in att.iter().zip(src_tokens) {
        if a == 0.0 {
            continue;
        }
        let Some(row) = lexicon.get(token) else { continue };
        for (target, p) in row {
            let w = a * p;
            match v_t.get(target) {
                Some(id) if !is_unemittable(id) => pr[id] += w,
                Some(_) => {}
                None => {
                    pr[UNK] += w;
                    match oov.iter_mut().find(|(t, _)| *t == target.as_str()) {
                        Some(entry) => entry.1 += w,
                        None => oov.push((target, w)),
                    }
                }
            }
        }
    }
    let unk_surface = oov
        .iter()
        .fold(None::<(&str, f64)>, |best, &(t, w)| match best {
            Some((bt, bw)) if bw > w || (bw == w && bt <= t) => Some((bt, bw)),
            _ => Some((t, w)),
        })
        .map(|(t, _)| t.to_owned());

    let emittable: Vec<bool> = (0..n).map(|i| !is_unemittable(i)).collect();
    Ok(match normalize_scores(&pr, &emittable, renormalize) {
        Some(probs) => LexiconDistribution {
            probs,
            neutral: false,
            unk_surface,
        },
        None => {
            let count = emittable.iter().filter(|&&e| e).count().max(1);
            let u = 1.0 / count as f64;
            LexiconDistribution {
                probs: emittable.iter().map(|&e| if e { u } else { 0.0 }).collect(),
                neutral: true,
                unk_surface: None,
            }
        }
    })
}

/// Turns non-negative scores into a distribution over the cells flagged in
/// `emittable`; `None` when every score is zero.
///
/// [`Renormalize::Softmax`] exponentiates the positive scores together with a
/// single "other" cell of score 0 standing for all remaining emittable cells,
/// which then share that cell's mass evenly.
pub fn normalize_scores(pr: &[f64], emittable: &[bool], mode: Renormalize) -> Option<Vec<f64>> {
    let total: f64 = pr.iter().zip(emittable).filter(|(_, &e)| e).map(|(p, _)| p).sum();
    if !(total > 0.0) {
        return None;
    }
    let n = pr.len();
    let mut probs = vec![0.0; n];
    match mode {
        Renormalize::None => {
            for i in (0..n).filter(|&i| emittable[i]) {
                probs[i] = pr[i] / total;
            }
        }
        Renormalize::Softmax => {
            let support: Vec<usize> = (0..n).filter(|&i| emittable[i] && pr[i] > 0.0).collect();
            let rest = emittable.iter().filter(|&&e| e).count() - support.len();
            let other = if rest > 0 { 1.0 } else { 0.0 };
            let z: f64 = support.iter().map(|&i| pr[i].exp()).sum::<f64>() + other;
            for &i in &support {
                probs[i] = pr[i].exp() / z;
            }
            if rest > 0 {
                let share = other / z / rest as f64;
                for i in (0..n).filter(|&i| emittable[i] && pr[i] <= 0.0) {
                    probs[i] = share;
                }
            }
        }
    }
    Some(probs)
}

/// `α · lexicon + (1 − α) · decoder`, returning the inputs unchanged at the
/// boundaries.
pub fn mix_distributions(decoder: &[f64], lexicon: &[f64], alpha: f64) -> Result<Vec<f64>> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::Config(format!("alpha {alpha} outside [0, 1]")));
    }
    if decoder.len() != lexicon.len() {
        return Err(Error::shape("distribution lengths", decoder.len(), lexicon.len()));
    }
    if alpha == 0.0 {
        return Ok(decoder.to_vec());
    }
    if alpha == 1.0 {
        return Ok(lexicon.to_vec());
    }
    Ok(decoder
        .iter()
        .zip(lexicon)
        .map(|(&d, &l)| d + alpha * (l - d))
        .collect())
}

/// True when `next` repeats the previously emitted surface form. Special
/// tokens never count as repetitions.
pub fn detect_repetition(previous: Option<&str>, next: &str) -> bool {
    match previous {
        Some(prev) => !is_special(prev) && !is_special(next) && prev == next,
        None => false,
    }
}

/// Continuation of the longest phrase-table entry whose source phrase occurs
/// in the sentence and whose target phrase contains `previous`.
pub fn phrase_substitute(previous: &str, src_tokens: &[String], table: &PhraseTable) -> Option<String> {
    let m = table.find_match(src_tokens, previous)?;
    table.continuation(&m).map(str::to_owned)
}
