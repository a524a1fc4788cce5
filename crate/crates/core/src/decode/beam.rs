use std::cmp::Ordering;

use crate::corpus::{is_special, BOS, EOS, UNK, UNK_TOKEN};
use crate::error::{Error, Result};
use crate::lexicon::Lexicon;
use crate::model::{DecoderState, EncoderStates, Model};
use crate::neural::Real;
use crate::phrasebook::PhraseTable;

use super::{
    detect_repetition, is_unemittable, lexicon_bias_distribution, mix_distributions,
    phrase_substitute, DecodeConfig, LexiconProvider, RepetitionTrigger,
};

/// A partial or finished translation inside the beam.
#[derive(Clone, Debug)]
pub struct Hypothesis<F> {
    /// Emitted ids, EOS excluded. A substituted token's id is its vocabulary
    /// id (UNK when the phrase-table word is unknown to the model).
    pub ids: Vec<usize>,
    pub surfaces: Vec<String>,
    /// Sum of `step_logprobs`.
    pub score: f64,
    /// Log-probability charged at each step, the EOS step included.
    pub step_logprobs: Vec<f64>,
    /// Positions in `surfaces` produced by phrase-table substitution.
    pub substituted: Vec<usize>,
    pub state: DecoderState<F>,
    pub prev_attention_argmax: Option<usize>,
    pub finished: bool,
    pub ended_with_eos: bool,
}

impl<F> Hypothesis<F> {
    fn root(state: DecoderState<F>) -> Self {
        Hypothesis {
            ids: Vec::new(),
            surfaces: Vec::new(),
            score: 0.0,
            step_logprobs: Vec::new(),
            substituted: Vec::new(),
            state,
            prev_attention_argmax: None,
            finished: false,
            ended_with_eos: false,
        }
    }

    pub fn last_id(&self) -> usize {
        self.ids.last().copied().unwrap_or(BOS)
    }

    pub fn last_surface(&self) -> Option<&str> {
        self.surfaces.last().map(String::as_str)
    }

    /// Length used for normalization: emitted tokens plus EOS when present.
    pub fn length(&self) -> usize {
        (self.ids.len() + usize::from(self.ended_with_eos)).max(1)
    }

    pub fn normalized_score(&self) -> f64 {
        self.score / self.length() as f64
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Translation {
    pub tokens: Vec<String>,
    pub ids: Vec<usize>,
    pub score: f64,
    pub normalized_score: f64,
    pub length: usize,
    pub step_logprobs: Vec<f64>,
    pub substituted: Vec<usize>,
    pub ended_with_eos: bool,
}

impl Translation {
    pub fn text(&self) -> String {
        self.tokens.join(" ")
    }
}

impl<F> From<&Hypothesis<F>> for Translation {
    fn from(h: &Hypothesis<F>) -> Self {
        Translation {
            tokens: h.surfaces.clone(),
            ids: h.ids.clone(),
            score: h.score,
            normalized_score: h.normalized_score(),
            length: h.length(),
            step_logprobs: h.step_logprobs.clone(),
            substituted: h.substituted.clone(),
            ended_with_eos: h.ended_with_eos,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BeamOutput {
    pub best: Translation,
    /// Finished hypotheses by descending normalized score.
    pub nbest: Vec<Translation>,
}

struct Candidate {
    parent: usize,
    rank: usize,
    id: usize,
    surface: String,
    logp: f64,
    substituted: bool,
}

/// Everything one decoding run needs besides the hypotheses.
struct Decoder<'a, F> {
    model: &'a Model<F>,
    src: &'a [String],
    enc: EncoderStates<F>,
    lexicon: Option<Lexicon>,
    table: Option<&'a PhraseTable>,
    cfg: &'a DecodeConfig,
}

struct Step<F> {
    probs: Vec<f64>,
    attention_argmax: usize,
    unk_surface: Option<String>,
    state: DecoderState<F>,
}

fn argmax(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in xs.iter().enumerate() {
        if x > xs[best] {
            best = i;
        }
    }
    best
}

impl<'a, F: Real> Decoder<'a, F> {
    fn new<P>(
        model: &'a Model<F>,
        src: &'a [String],
        provider: &P,
        table: Option<&'a PhraseTable>,
        cfg: &'a DecodeConfig,
    ) -> Result<Self>
    where
        P: LexiconProvider + ?Sized,
    {
        cfg.validate()?;
        if src.is_empty() {
            return Err(Error::EmptyInput("cannot translate an empty source sentence"));
        }
        let enc = model.encode(&model.encode_source(src))?;
        let lexicon = if cfg.alpha > 0.0 {
            Some(provider.lexicon_for(src)?)
        } else {
            None
        };
        Ok(Decoder {
            model,
            src,
            enc,
            lexicon,
            table,
            cfg,
        })
    }

    /// Mixed output distribution for extending `h`.
    fn step(&self, h: &Hypothesis<F>) -> Result<Step<F>> {
        let out = self.model.decode_step(&h.state, h.last_id(), &self.enc)?;
        let decoder: Vec<f64> = out.distribution.iter().map(|p| p.as_f64()).collect();
        let att: Vec<f64> = out.attention.iter().map(|a| a.as_f64()).collect();
        let (probs, unk_surface) = match &self.lexicon {
            Some(lexicon) => {
                let lex = lexicon_bias_distribution(
                    &att,
                    self.src,
                    lexicon,
                    &self.model.tgt_vocab,
                    self.cfg.renormalize,
                )?;
                (mix_distributions(&decoder, &lex.probs, self.cfg.alpha)?, lex.unk_surface)
            }
            None => (decoder, None),
        };
        Ok(Step {
            probs,
            attention_argmax: argmax(&att),
            unk_surface,
            state: out.state,
        })
    }

    fn surface(&self, id: usize, step: &Step<F>) -> String {
        if id == UNK {
            if let Some(s) = &step.unk_surface {
                return s.clone();
            }
        }
        self.model
            .tgt_vocab
            .token(id)
            .unwrap_or(UNK_TOKEN)
            .to_owned()
    }

    /// Up to `k` extensions of `h` by descending probability (ties to the
    /// smaller id), with the repetition fix applied to the best one.
    fn candidates(&self, parent: usize, h: &Hypothesis<F>, step: &Step<F>, k: usize) -> Vec<Candidate> {
        let mut order: Vec<usize> = (0..step.probs.len())
            .filter(|&i| !is_unemittable(i) && step.probs[i] > 0.0)
            .collect();
        order.sort_by(|&a, &b| step.probs[b].total_cmp(&step.probs[a]).then(a.cmp(&b)));
        order.truncate(k);
        let mut out: Vec<Candidate> = order
            .into_iter()
            .enumerate()
            .map(|(rank, id)| Candidate {
                parent,
                rank,
                id,
                surface: self.surface(id, step),
                logp: step.probs[id].ln(),
                substituted: false,
            })
            .collect();

        if let Some(replacement) = self.repair(h, step, out.first()) {
            out.retain(|c| c.rank == 0 || c.surface != replacement);
            let top = &mut out[0];
            top.id = self.model.tgt_vocab.id(&replacement);
            top.surface = replacement;
            top.substituted = true;
        }
        out
    }

    /// The phrase-table continuation replacing `top`, if the repetition fix fires.
    fn repair(&self, h: &Hypothesis<F>, step: &Step<F>, top: Option<&Candidate>) -> Option<String> {
        let (top, table) = (top?, self.table?);
        if !self.cfg.repetition_fix || top.id == EOS {
            return None;
        }
        let previous = h.last_surface()?;
        let triggered = match self.cfg.trigger {
            RepetitionTrigger::OutputArgmax => detect_repetition(Some(previous), &top.surface),
            RepetitionTrigger::AttentionArgmax => {
                !is_special(previous) && h.prev_attention_argmax == Some(step.attention_argmax)
            }
        };
        if !triggered {
            return None;
        }
        phrase_substitute(previous, self.src, table).filter(|r| *r != top.surface)
    }

    fn extend(&self, h: &Hypothesis<F>, step: &Step<F>, c: &Candidate, max_len: usize) -> Hypothesis<F> {
        let mut next = Hypothesis {
            ids: h.ids.clone(),
            surfaces: h.surfaces.clone(),
            score: h.score + c.logp,
            step_logprobs: h.step_logprobs.clone(),
            substituted: h.substituted.clone(),
            state: step.state.clone(),
            prev_attention_argmax: Some(step.attention_argmax),
            finished: false,
            ended_with_eos: false,
        };
        next.step_logprobs.push(c.logp);
        if c.id == EOS && !c.substituted {
            next.finished = true;
            next.ended_with_eos = true;
            return next;
        }
        if c.substituted {
            next.substituted.push(next.surfaces.len());
        }
        next.ids.push(c.id);
        next.surfaces.push(c.surface.clone());
        next.finished = next.ids.len() >= max_len;
        next
    }
}

fn rank_finished<F>(mut finished: Vec<Hypothesis<F>>) -> BeamOutput {
    // Stable sort keeps completion order among equal scores.
    finished.sort_by(|a, b| {
        b.normalized_score()
            .partial_cmp(&a.normalized_score())
            .unwrap_or(Ordering::Equal)
    });
    let nbest: Vec<Translation> = finished.iter().map(Translation::from).collect();
    BeamOutput {
        best: nbest[0].clone(),
        nbest,
    }
}

/// Beam search over the lexicon-mixed output distribution.
///
/// Each live hypothesis proposes its best `beam_size` extensions; the best
/// `beam_size − finished` of all proposals survive. Hypotheses finish on EOS
/// or at the length cap, and search stops once `beam_size` have finished.
/// When the repetition fix fires, the phrase-table continuation takes the
/// place of the best extension at that extension's probability.
pub fn beam_search<F, P>(
    model: &Model<F>,
    src: &[String],
    provider: &P,
    table: Option<&PhraseTable>,
    cfg: &DecodeConfig,
) -> Result<BeamOutput>
where
    F: Real,
    P: LexiconProvider + ?Sized,
{
    let d = Decoder::new(model, src, provider, table, cfg)?;
    let max_len = cfg.max_len_for(src.len());
    let k = cfg.beam_size;
    let mut live = vec![Hypothesis::root(d.enc.init.clone())];
    let mut finished: Vec<Hypothesis<F>> = Vec::new();

    while !live.is_empty() && finished.len() < k {
        let steps: Vec<Step<F>> = live.iter().map(|h| d.step(h)).collect::<Result<_>>()?;
        let mut pool: Vec<Candidate> = live
            .iter()
            .zip(&steps)
            .enumerate()
            .flat_map(|(i, (h, s))| d.candidates(i, h, s, k))
            .collect();
        pool.sort_by(|a, b| {
            let sa = live[a.parent].score + a.logp;
            let sb = live[b.parent].score + b.logp;
            sb.total_cmp(&sa)
                .then(a.parent.cmp(&b.parent))
                .then(a.rank.cmp(&b.rank))
        });
        pool.truncate(k - finished.len());

        let mut next = Vec::with_capacity(pool.len());
        for c in &pool {
            let h = d.extend(&live[c.parent], &steps[c.parent], c, max_len);
            if h.finished {
                finished.push(h);
            } else {
                next.push(h);
            }
        }
        live = next;
    }
    finished.extend(live);
    Ok(rank_finished(finished))
}

/// Picks the most probable token at every step, with the same mixing and
/// repetition fix as [`beam_search`].
pub fn greedy_decode<F, P>(
    model: &Model<F>,
    src: &[String],
    provider: &P,
    table: Option<&PhraseTable>,
    cfg: &DecodeConfig,
) -> Result<Translation>
where
    F: Real,
    P: LexiconProvider + ?Sized,
{
    let d = Decoder::new(model, src, provider, table, cfg)?;
    let max_len = cfg.max_len_for(src.len());
    let mut h = Hypothesis::root(d.enc.init.clone());
    while !h.finished {
        let step = d.step(&h)?;
        let Some(best) = d.candidates(0, &h, &step, 1).into_iter().next() else {
            // Only unemittable ids carry mass; stop without EOS.
            break;
        };
        h = d.extend(&h, &step, &best, max_len);
    }
    Ok(Translation::from(&h))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{tokenize, Vocabulary};
    use crate::model::ModelConfig;

    fn model(seed: u64) -> Model<f64> {
        let src = tokenize("the house is big a");
        let tgt = tokenize("la casa es grande una");
        let config = ModelConfig {
            hidden_size: 6,
            embedding_size: 5,
            seed,
            ..ModelConfig::default()
        };
        Model::new(
            config,
            Vocabulary::build([src.as_slice()], 1),
            Vocabulary::build([tgt.as_slice()], 1),
        )
        .unwrap()
    }

    #[test]
    fn nbest_sorted_and_scores_consistent() {
        let m = model(1);
        let cfg = DecodeConfig {
            alpha: 0.0,
            ..DecodeConfig::default()
        };
        let out = beam_search(&m, &tokenize("the house"), &Lexicon::new(), None, &cfg).unwrap();
        assert!(out
            .nbest
            .windows(2)
            .all(|w| w[0].normalized_score >= w[1].normalized_score));
        for t in &out.nbest {
            let sum: f64 = t.step_logprobs.iter().sum();
            assert!((sum - t.score).abs() < 1e-12);
            assert!(t.score <= 0.0);
        }
        assert!(out.nbest.len() <= cfg.beam_size);
    }

    #[test]
    fn beam_one_is_greedy() {
        for seed in 0..5 {
            let m = model(seed);
            let cfg = DecodeConfig {
                beam_size: 1,
                ..DecodeConfig::default()
            };
            let mut lex = Lexicon::new();
            lex.insert("house", vec![("casa".into(), 0.9), ("hogar".into(), 0.1)]);
            let src = tokenize("the house is big");
            let beam = beam_search(&m, &src, &lex, None, &cfg).unwrap();
            let greedy = greedy_decode(&m, &src, &lex, None, &cfg).unwrap();
            assert_eq!(beam.best, greedy);
        }
    }

    #[test]
    fn empty_source_is_an_error() {
        let m = model(0);
        let cfg = DecodeConfig::default();
        assert!(matches!(
            beam_search(&m, &[], &Lexicon::new(), None, &cfg),
            Err(Error::EmptyInput(_))
        ));
    }

    #[test]
    fn unk_takes_lexicon_surface() {
        let m = model(3);
        let mut lex = Lexicon::new();
        lex.insert("house", vec![("hogar".into(), 1.0)]);
        let cfg = DecodeConfig {
            alpha: 1.0,
            beam_size: 1,
            max_len: Some(1),
            renormalize: super::super::Renormalize::None,
            ..DecodeConfig::default()
        };
        let t = greedy_decode(&m, &tokenize("house"), &lex, None, &cfg).unwrap();
        assert_eq!(t.ids, vec![UNK]);
        assert_eq!(t.tokens, vec!["hogar".to_owned()]);
    }
}
