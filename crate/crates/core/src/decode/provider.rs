use crate::align::{context_lexicon, CooccurrenceIndex, EmConfig, DEFAULT_MAX_PAIRS};
use crate::corpus::ParallelCorpus;
use crate::error::{Error, Result};
use crate::lexicon::Lexicon;

use super::LexiconMode;

/// Supplies the lexicon used while translating one source sentence.
pub trait LexiconProvider: Sync {
    fn lexicon_for(&self, src_tokens: &[String]) -> Result<Lexicon>;
}

impl LexiconProvider for Lexicon {
    fn lexicon_for(&self, src_tokens: &[String]) -> Result<Lexicon> {
        Ok(self.restrict(src_tokens))
    }
}

/// Training pairs from which a context-aware lexicon is re-estimated for
/// every sentence.
#[derive(Clone, Debug)]
pub struct ContextSource {
    pub corpus: ParallelCorpus,
    pub index: CooccurrenceIndex,
    pub em: EmConfig,
    pub max_pairs: usize,
}

impl ContextSource {
    pub fn new(corpus: ParallelCorpus, em: EmConfig) -> Self {
        ContextSource {
            index: CooccurrenceIndex::build(&corpus),
            corpus,
            em,
            max_pairs: DEFAULT_MAX_PAIRS,
        }
    }

    pub fn lexicon_for(&self, src_tokens: &[String]) -> Result<Lexicon> {
        context_lexicon(src_tokens, &self.corpus, &self.index, &self.em, self.max_pairs)
    }
}

#[derive(Clone, Debug)]
pub struct LexiconSource {
    mode: LexiconMode,
    global: Lexicon,
    context: Option<ContextSource>,
}

impl LexiconSource {
    /// `context` is required for the context-based modes.
    pub fn new(mode: LexiconMode, global: Lexicon, context: Option<ContextSource>) -> Result<Self> {
        if mode != LexiconMode::Global && context.is_none() {
            return Err(Error::Config(format!(
                "lexicon mode {mode:?} needs training pairs for context lexicons"
            )));
        }
        Ok(LexiconSource {
            mode,
            global,
            context,
        })
    }

    pub fn mode(&self) -> LexiconMode {
        self.mode
    }
}

impl LexiconProvider for LexiconSource {
    fn lexicon_for(&self, src_tokens: &[String]) -> Result<Lexicon> {
        let context = || self.context.as_ref().expect("checked in new").lexicon_for(src_tokens);
        match self.mode {
            LexiconMode::Global => Ok(self.global.restrict(src_tokens)),
            LexiconMode::Context => context(),
            LexiconMode::ContextBackoffGlobal => Ok(context()?.backoff(&self.global, src_tokens)),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::tokenize;

    #[test]
    fn modes_combine_context_and_global() {
        let corpus = ParallelCorpus::from_text_pairs("c", &[("la casa", "the house"), ("la", "the")]);
        let mut global = Lexicon::new();
        global.insert("casa", vec![("home".into(), 1.0)]);
        global.insert("perro", vec![("dog".into(), 1.0)]);
        let ctx = ContextSource::new(corpus, EmConfig::default());
        let src = tokenize("la perro");

        let g = LexiconSource::new(LexiconMode::Global, global.clone(), None).unwrap();
        let l = g.lexicon_for(&src).unwrap();
        assert_eq!((l.len(), l.prob("perro", "dog")), (1, 1.0));

        let c = LexiconSource::new(LexiconMode::Context, global.clone(), Some(ctx.clone())).unwrap();
        let l = c.lexicon_for(&src).unwrap();
        assert!(l.get("perro").is_none());
        assert!(l.prob("la", "the") > 0.5);

        let b = LexiconSource::new(LexiconMode::ContextBackoffGlobal, global.clone(), Some(ctx)).unwrap();
        let l = b.lexicon_for(&src).unwrap();
        assert_eq!(l.prob("perro", "dog"), 1.0);
        assert!(l.prob("la", "the") > 0.5);

        assert!(LexiconSource::new(LexiconMode::Context, global, None).is_err());
    }
}
