use std::path::Path;

use rayon::prelude::*;

use crate::corpus::{read_sentences, write_file};
use crate::error::Result;
use crate::model::Model;
use crate::neural::Real;
use crate::phrasebook::PhraseTable;

use super::{beam_search, DecodeConfig, LexiconProvider, Translation};

/// Translates sentences in parallel; results keep the input order.
pub fn translate_sentences<F, P>(
    model: &Model<F>,
    sentences: &[Vec<String>],
    provider: &P,
    table: Option<&PhraseTable>,
    cfg: &DecodeConfig,
) -> Result<Vec<Translation>>
where
    F: Real,
    P: LexiconProvider + ?Sized,
{
    sentences
        .par_iter()
        .map(|src| beam_search(model, src, provider, table, cfg).map(|out| out.best))
        .collect()
}

/// One translation per line, tokens separated by single spaces.
pub fn write_translations(path: &Path, translations: &[Translation]) -> Result<()> {
    let mut out = String::new();
    for t in translations {
        out.push_str(&t.text());
        out.push('\n');
    }
    write_file(path, &out)
}

/// Sidecar rows `line<TAB>score<TAB>length` with 1-based line numbers and the
/// unnormalized log score.
pub fn write_scores(path: &Path, translations: &[Translation]) -> Result<()> {
    let mut out = String::new();
    for (i, t) in translations.iter().enumerate() {
        out.push_str(&format!("{}\t{:.6}\t{}\n", i + 1, t.score, t.length));
    }
    write_file(path, &out)
}

/// Reads a tokenized source file, translates it and writes the output file
/// (plus the score sidecar when `scores_path` is given).
pub fn translate_corpus<F, P>(
    model: &Model<F>,
    input: &Path,
    provider: &P,
    table: Option<&PhraseTable>,
    cfg: &DecodeConfig,
    out_path: &Path,
    scores_path: Option<&Path>,
) -> Result<Vec<Translation>>
where
    F: Real,
    P: LexiconProvider + ?Sized,
{
    let sentences = read_sentences(input)?;
    let translations = translate_sentences(model, &sentences, provider, table, cfg)?;
    write_translations(out_path, &translations)?;
    if let Some(p) = scores_path {
        write_scores(p, &translations)?;
    }
    Ok(translations)
}
