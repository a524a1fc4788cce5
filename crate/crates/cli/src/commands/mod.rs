pub mod align;
pub mod evaluate;
pub mod phrasebook;
pub mod prepare;
pub mod train;
pub mod translate;

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use noov::corpus::{load_parallel, read_sentences, tokenize_with, ParallelCorpus};

fn retokenize(sentence: Vec<String>, split_punct: bool) -> Vec<String> {
    if split_punct {
        tokenize_with(&sentence.join(" "), true)
    } else {
        sentence
    }
}

pub fn load_sentences(path: &Path, split_punct: bool) -> Result<Vec<Vec<String>>> {
    Ok(read_sentences(path)?
        .into_iter()
        .map(|s| retokenize(s, split_punct))
        .collect())
}

pub fn load_pair(src: &Path, tgt: &Path, split_punct: bool) -> Result<ParallelCorpus> {
    let corpus = load_parallel(src, tgt)?;
    if !split_punct {
        return Ok(corpus);
    }
    Ok(ParallelCorpus::from_sentences(
        corpus.name,
        corpus
            .pairs
            .into_iter()
            .map(|p| (retokenize(p.source, true), retokenize(p.target, true))),
    ))
}

/// Loads and concatenates several parallel file pairs.
pub fn load_pairs(name: &str, srcs: &[PathBuf], tgts: &[PathBuf], split_punct: bool) -> Result<ParallelCorpus> {
    if srcs.len() != tgts.len() {
        bail!(
            "{} source files but {} target files; pass them in matching pairs",
            srcs.len(),
            tgts.len()
        );
    }
    if srcs.is_empty() {
        bail!("no parallel files given");
    }
    let parts = srcs
        .iter()
        .zip(tgts)
        .map(|(s, t)| load_pair(s, t, split_punct))
        .collect::<Result<Vec<_>>>()?;
    Ok(ParallelCorpus::concat(name, &parts))
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).with_context(|| format!("cannot create {}", parent.display()))?;
    }
    std::fs::write(path, text).with_context(|| format!("cannot write {}", path.display()))
}
